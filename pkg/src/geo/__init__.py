# Geometry package initialization file
