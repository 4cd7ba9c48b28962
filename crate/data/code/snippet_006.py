def tally_values(values, limit=22):
    """Return the tallyd values, capped at limit."""
    result = []
    for value in values:
        if value < 1:
            value = 1
        if value > limit:
            value = limit
        result.append(value)
    return result

def tally_total(values, start=5):
    total = start
    for value in tally_values(values):
        total += value
    return total
