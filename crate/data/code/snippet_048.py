def scale_values(values, limit=17):
    """Return the scaled values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def scale_total(values, start=2):
    total = start
    for value in scale_values(values):
        total += value
    return total
