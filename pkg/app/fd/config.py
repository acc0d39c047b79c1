"""
Configuration for the FD model, calibration and synthetic oracle
"""

# Data protocol (hourly per-lane aggregation of weekday detector data)
PROTOCOL_CONFIG = {
    "bin_width": 30.0,  # veh/hr-lane
    "cycle_target": 114.0,  # seconds
    "cycle_tolerance": 5.0,  # seconds, inclusive
    "phases": (2, 6),  # major-street protected through phases
    "study_start_hour": 7,  # inclusive
    "study_end_hour": 20,  # exclusive
    "study_weekdays": (0, 1, 2, 3, 4),  # Mon-Fri
    "min_bin_count_for_capacity": 1,
}

# Damped least-squares defaults
FIT_CONFIG = {
    "max_iter": 200,
    "grad_tol": 1e-10,
    "step_tol": 1e-12,
    "initial_alpha": 1.0,
    "initial_beta": 1.0,
    "lambda0": 1e-3,
    "weight_by_count": True,
    "lambda_up": 10.0,
    "lambda_down": 10.0,
    "lambda_max": 1e16,
}

# Green split range over which theta coefficients are trusted
THETA_CONFIG = {
    "g_lo": 0.3,
    "g_hi": 0.8,
}

# Synthetic segment defaults
ORACLE_CONFIG = {
    "length_m": 3000.0,  # at the lowest green split of a grid
    "length_scales_with_red": True,  # grid segments shorten in proportion to 1 - g
    "v_max_kmh": 50.0,
    "cycle_s": 114.0,
    "sat_flow": 1800.0,  # veh/hr-lane of green
    "lane_count": 2,
    "demand_fraction": 0.95,  # of g * sat_flow
    "flow_low_fraction": 0.02,  # of q_cap, for sample_from_fd
    "flow_high_fraction": 0.98,
    "corpus_start": "2024-01-01T07:00:00",  # a Monday
    "green_offset_s": 10.0,
    "records_per_hour": 4,  # sub-hour count records per lane
    "speed_offset_min": 30,  # minute of the hour stamped on synthetic speed records
    "n_cycles": 40,  # cycles in a synthetic event log
    "min_speed_fraction": 1e-6,  # of v_max, floor for noisy simulated speeds
}

# Curve audit defaults
AUDIT_CONFIG = {
    "tolerance_factor": 1e-9,  # times v_max
    "n_green": 11,
    "n_flow": 50,
}
