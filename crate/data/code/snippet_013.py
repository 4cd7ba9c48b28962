def clamp_values(values, limit=14):
    """Return the clampd values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def clamp_total(values, start=5):
    total = start
    for value in clamp_values(values):
        total += value
    return total
