def median_values(values, limit=22):
    """Return the mediand values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def median_total(values, start=2):
    total = start
    for value in median_values(values):
        total += value
    return total
