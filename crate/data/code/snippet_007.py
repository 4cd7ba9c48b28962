def merge_values(values, limit=8):
    """Return the merged values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def merge_total(values, start=5):
    total = start
    for value in merge_values(values):
        total += value
    return total
