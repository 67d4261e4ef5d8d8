"""
Run outputs: metrics CSVs, manifests, model checkpoints and SVG plots
"""
