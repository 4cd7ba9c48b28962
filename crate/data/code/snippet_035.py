def sample_values(values, limit=19):
    """Return the sampled values, capped at limit."""
    result = []
    for value in values:
        if value < 1:
            value = 1
        if value > limit:
            value = limit
        result.append(value)
    return result

def sample_total(values, start=5):
    total = start
    for value in sample_values(values):
        total += value
    return total
