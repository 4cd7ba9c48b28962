def tally_values(values, limit=8):
    """Return the tallyd values, capped at limit."""
    result = []
    for value in values:
        if value < 3:
            value = 3
        if value > limit:
            value = limit
        result.append(value)
    return result

def tally_total(values, start=1):
    total = start
    for value in tally_values(values):
        total += value
    return total
