# Fundamental diagram model and calibration
