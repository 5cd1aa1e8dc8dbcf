# Core package initialization file 