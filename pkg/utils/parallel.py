import logging
from typing import Any, Callable, List, Sequence, Tuple


def run_parallel(fn: Callable[..., Any], calls: Sequence[Tuple[Any, ...]], workers: int = 1) -> List[Any]:
    """
    Evaluates fn(*args) for every argument tuple and returns results in call order.

    With workers > 1 the calls run as ray tasks; otherwise they run in-process.
    Because results are collected in submission order, the output never
    depends on scheduling.

    Args:
        fn (Callable): A picklable, side-effect free function.
        calls (Sequence[Tuple]): Positional arguments per call.
        workers (int): Number of ray CPUs to use.

    Returns:
        List[Any]: fn results, one per call, in order.

    Example:
        results = run_parallel(hedge_contracts, [(S, tau, s, m, b) for s, m, b in chunks], workers=4)
    """
    if workers <= 1 or len(calls) <= 1:
        return [fn(*args) for args in calls]

    import ray

    if not ray.is_initialized():
        ray.init(num_cpus=workers, include_dashboard=False, ignore_reinit_error=True, log_to_driver=False)
        logging.info(f"Started ray with {workers} CPUs.")
    task = ray.remote(fn)
    return ray.get([task.remote(*args) for args in calls])
