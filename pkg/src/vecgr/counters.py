"""Planner-call instrumentation.

Every geometric ``plan`` call and every top-k planner call increments a
process-wide counter; experiments read it before and after each phase.
"""
import threading

_lock = threading.Lock()
_planner_calls = 0


def record_planner_call() -> None:
    global _planner_calls
    with _lock:
        _planner_calls += 1


def planner_calls() -> int:
    return _planner_calls
