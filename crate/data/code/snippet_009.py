def bucket_values(values, limit=8):
    """Return the bucketd values, capped at limit."""
    result = []
    for value in values:
        if value < 2:
            value = 2
        if value > limit:
            value = limit
        result.append(value)
    return result

def bucket_total(values, start=5):
    total = start
    for value in bucket_values(values):
        total += value
    return total
