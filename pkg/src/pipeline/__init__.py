# Pipeline package initialization file
