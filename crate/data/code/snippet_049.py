def clamp_values(values, limit=15):
    """Return the clampd values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def clamp_total(values, start=7):
    total = start
    for value in clamp_values(values):
        total += value
    return total
