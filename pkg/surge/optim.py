"""
Optimizer step rules as pure functions of (config, state, theta, g).
Nothing is updated in place: step() returns the new parameters and a new
OptimizerState.

sign(0) is 0 for the sign rule. Adam divides by sqrt(v_hat) + eps_adam and
treats a zero denominator (only possible with eps_adam = 0) as a zero
update, which keeps Adam with beta1 = beta2 = 0 and eps_adam = 0 identical
to the sign rule.
"""
import numpy as np

from models import OptimizerConfig, OptimizerState


def adam_direction(config:OptimizerConfig, state:OptimizerState) -> np.ndarray:
    """
    Bias-corrected update direction m_hat / (sqrt(v_hat) + eps_adam) of a
    state that has taken at least one step.
    """
    if state.t < 1:
        raise ValueError('adam direction needs at least one step')
    m_hat = state.m / (1 - config.beta1 ** state.t)
    v_hat = state.v / (1 - config.beta2 ** state.t)
    denominator = np.sqrt(v_hat) + config.eps_adam
    safe = np.where(denominator > 0, denominator, 1.0)
    return np.where(denominator > 0, m_hat / safe, 0.0)


def step(config:OptimizerConfig, state:OptimizerState, theta:np.ndarray,
         g:np.ndarray) -> tuple:
    theta = np.asarray(theta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if theta.shape != g.shape or state.m.shape != g.shape:
        raise ValueError(f'theta {theta.shape}, gradient {g.shape} and '
                         f'optimizer state {state.m.shape} disagree')

    if config.kind == 'sgd':
        new_state = OptimizerState(state.m, state.v, state.t + 1)
        return theta - config.lr * g, new_state
    if config.kind == 'sign':
        new_state = OptimizerState(state.m, state.v, state.t + 1)
        return theta - config.lr * np.sign(g), new_state

    b1, b2 = config.beta1, config.beta2
    new_state = OptimizerState(b1 * state.m + (1 - b1) * g,
                               b2 * state.v + (1 - b2) * (g * g),
                               state.t + 1)
    return theta - config.lr * adam_direction(config, new_state), new_state


def bias_corrected_moments(config:OptimizerConfig,
                           state:OptimizerState) -> tuple:
    if state.t < 1:
        raise ValueError('bias correction needs at least one step')
    return (state.m / (1 - config.beta1 ** state.t),
            state.v / (1 - config.beta2 ** state.t))


def adam_sign_deviation(config:OptimizerConfig, gradient_stream) -> float:
    """
    Runs Adam over the gradient stream and returns the largest
    |direction - sign(m_hat)| seen over all steps and coordinates, i.e. how
    far the Adam update strays from a sign update of its running mean.
    """
    if config.kind != 'adam':
        raise ValueError(f'adam_sign_deviation needs an adam config, got '
                         f'"{config.kind}"')
    state = None
    theta = None
    worst = 0.0
    for g in gradient_stream:
        g = np.asarray(g, dtype=np.float64)
        if state is None:
            state = OptimizerState.zeros(g.size)
            theta = np.zeros(g.size)
        theta, state = step(config, state, theta, g)
        m_hat, _ = bias_corrected_moments(config, state)
        deviation = np.abs(adam_direction(config, state) - np.sign(m_hat))
        worst = max(worst, float(np.max(deviation)))
    if state is None:
        raise ValueError('gradient stream is empty')
    return worst


def adam_limit_direction(mean:np.ndarray, var:np.ndarray) -> np.ndarray:
    """
    Adam's update for beta -> 1, where m_hat and v_hat approach the gradient
    mean and second moment: sign(mean) / sqrt(1 + var / mean^2). Zero where
    the mean is zero.
    """
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var < 0):
        raise ValueError('variance must be >= 0')
    mean2 = mean * mean
    safe = np.where(mean2 > 0, mean2, 1.0)
    return np.where(mean2 > 0, np.sign(mean) / np.sqrt(1 + var / safe), 0.0)
