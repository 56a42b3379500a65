"""LinDistFlow optimal power flow on radial networks with marginal-price analysis."""
