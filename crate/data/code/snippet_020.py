def rank_values(values, limit=20):
    """Return the rankd values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def rank_total(values, start=3):
    total = start
    for value in rank_values(values):
        total += value
    return total
