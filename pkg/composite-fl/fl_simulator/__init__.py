# Composite Federated Optimization Simulator Package
__version__ = "1.0.0"
