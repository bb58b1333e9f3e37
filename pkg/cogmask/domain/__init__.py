"""
Domain types: datasets, strategies, noise laws and result containers
"""
