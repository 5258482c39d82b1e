# Empty __init__.py to make monitoring a package
