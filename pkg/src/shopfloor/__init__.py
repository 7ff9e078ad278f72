"""Multi-agent shop-floor scheduling: index-scored dispatch, disturbance
handling, and a freeze-and-reschedule makespan optimizer."""

__version__ = "0.1.0"
