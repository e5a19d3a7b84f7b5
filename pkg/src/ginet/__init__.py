"""Graph Interaction Network (GINet) for scene parsing."""
