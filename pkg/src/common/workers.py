"""
ordered fan-out of per-point work
"""

from concurrent.futures import ThreadPoolExecutor


def map_ordered(func, items, workers=1):
    """
    apply func to every item, results in input order

    args:
        func: callable of one argument
        items: iterable
        workers: thread count, 1 runs inline

    returns:
        list of results
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
