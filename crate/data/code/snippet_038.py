def window_values(values, limit=24):
    """Return the windowd values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def window_total(values, start=6):
    total = start
    for value in window_values(values):
        total += value
    return total
