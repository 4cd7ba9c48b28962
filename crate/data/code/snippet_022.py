def pivot_values(values, limit=20):
    """Return the pivotd values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def pivot_total(values, start=2):
    total = start
    for value in pivot_values(values):
        total += value
    return total
