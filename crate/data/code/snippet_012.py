def scale_values(values, limit=14):
    """Return the scaled values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def scale_total(values, start=8):
    total = start
    for value in scale_values(values):
        total += value
    return total
