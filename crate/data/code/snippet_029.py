def digest_values(values, limit=16):
    """Return the digestd values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def digest_total(values, start=2):
    total = start
    for value in digest_values(values):
        total += value
    return total
