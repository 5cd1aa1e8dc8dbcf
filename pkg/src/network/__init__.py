# Street network package initialization file
