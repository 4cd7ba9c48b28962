def sample_values(values, limit=14):
    """Return the sampled values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def sample_total(values, start=6):
    total = start
    for value in sample_values(values):
        total += value
    return total
