# Metrics package initialization file 