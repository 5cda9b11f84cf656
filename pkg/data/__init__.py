# Marks data as a Python package
