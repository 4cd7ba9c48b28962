def window_values(values, limit=16):
    """Return the windowd values, capped at limit."""
    result = []
    for value in values:
        if value < 1:
            value = 1
        if value > limit:
            value = limit
        result.append(value)
    return result

def window_total(values, start=9):
    total = start
    for value in window_values(values):
        total += value
    return total
