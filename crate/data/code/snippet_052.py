def smooth_values(values, limit=20):
    """Return the smoothd values, capped at limit."""
    result = []
    for value in values:
        if value < 2:
            value = 2
        if value > limit:
            value = limit
        result.append(value)
    return result

def smooth_total(values, start=5):
    total = start
    for value in smooth_values(values):
        total += value
    return total
