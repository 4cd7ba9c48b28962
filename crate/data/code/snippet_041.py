def digest_values(values, limit=24):
    """Return the digestd values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def digest_total(values, start=3):
    total = start
    for value in digest_values(values):
        total += value
    return total
