# Spatial statistics package initialization file
