def tally_values(values, limit=24):
    """Return the tallyd values, capped at limit."""
    result = []
    for value in values:
        if value < 4:
            value = 4
        if value > limit:
            value = limit
        result.append(value)
    return result

def tally_total(values, start=2):
    total = start
    for value in tally_values(values):
        total += value
    return total
