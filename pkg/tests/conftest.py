# Keeps the tests directory on sys.path so shared helpers import by name.
