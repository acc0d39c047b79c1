# Detector, speed and signal-event ingestion
