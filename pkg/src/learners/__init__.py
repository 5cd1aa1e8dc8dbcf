# Learners package initialization file
