def merge_values(values, limit=15):
    """Return the merged values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def merge_total(values, start=2):
    total = start
    for value in merge_values(values):
        total += value
    return total
