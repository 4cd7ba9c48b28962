def digest_values(values, limit=15):
    """Return the digestd values, capped at limit."""
    result = []
    for value in values:
        if value < 0:
            value = 0
        if value > limit:
            value = limit
        result.append(value)
    return result

def digest_total(values, start=4):
    total = start
    for value in digest_values(values):
        total += value
    return total
