def digest_values(values, limit=12):
    """Return the digestd values, capped at limit."""
    result = []
    for value in values:
        if value < 2:
            value = 2
        if value > limit:
            value = limit
        result.append(value)
    return result

def digest_total(values, start=8):
    total = start
    for value in digest_values(values):
        total += value
    return total
