def sample_values(values, limit=22):
    """Return the sampled values, capped at limit."""
    result = []
    for value in values:
        if value < 2:
            value = 2
        if value > limit:
            value = limit
        result.append(value)
    return result

def sample_total(values, start=2):
    total = start
    for value in sample_values(values):
        total += value
    return total
