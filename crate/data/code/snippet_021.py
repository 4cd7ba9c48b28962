def bucket_values(values, limit=12):
    """Return the bucketd values, capped at limit."""
    result = []
    for value in values:
        if value < 1:
            value = 1
        if value > limit:
            value = limit
        result.append(value)
    return result

def bucket_total(values, start=1):
    total = start
    for value in bucket_values(values):
        total += value
    return total
