# Command-line front-end
