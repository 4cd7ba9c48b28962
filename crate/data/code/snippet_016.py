def smooth_values(values, limit=13):
    """Return the smoothd values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def smooth_total(values, start=3):
    total = start
    for value in smooth_values(values):
        total += value
    return total
