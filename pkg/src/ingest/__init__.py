# Ingest package initialization file
