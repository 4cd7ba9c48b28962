def median_values(values, limit=17):
    """Return the mediand values, capped at limit."""
    result = []
    for value in values:
        if value < 0:
            value = 0
        if value > limit:
            value = limit
        result.append(value)
    return result

def median_total(values, start=9):
    total = start
    for value in median_values(values):
        total += value
    return total
