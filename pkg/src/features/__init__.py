# Features package initialization file
