def digest_values(values, limit=13):
    """Return the digestd values, capped at limit."""
    result = []
    for value in values:
        if value < 1:
            value = 1
        if value > limit:
            value = limit
        result.append(value)
    return result

def digest_total(values, start=8):
    total = start
    for value in digest_values(values):
        total += value
    return total
