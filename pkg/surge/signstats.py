"""
Gauss error function and the analytic moments of the sign of a Gaussian
mini-batch gradient.

erf follows the rational approximations of FreeBSD's msun s_erf.c
(Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
Developed at SunPro, a Sun Microsystems, Inc. business. Permission to use,
copy, modify, and distribute this software is freely granted, provided that
this notice is preserved.) The exp() splitting trick of the C version is
omitted; the maximal absolute error stays below 1e-15, well inside the 1e-7
this package needs.
"""
import math

import numpy as np
from numpy.polynomial import Polynomial

from models import GradientStats


# Past this argument erf(x) rounds to +-1 in double precision.
SATURATION = 6.0

ERX = 8.45062911510467529297e-01
EFX = 1.28379167095512586316e-01

# erf on [0, 0.84375]
PP = Polynomial([1.28379167095512558561e-01, -3.25042107247001499370e-01,
                 -2.84817495755985104766e-02, -5.77027029648944159157e-03,
                 -2.37630166566501626084e-05])
QQ = Polynomial([1.0, 3.97917223959155352819e-01, 6.50222499887672944485e-02,
                 5.08130628187576562776e-03, 1.32494738004321644526e-04,
                 -3.96022827877536812320e-06])
# erf on [0.84375, 1.25]
PA = Polynomial([-2.36211856075265944077e-03, 4.14856118683748331666e-01,
                 -3.72207876035701323847e-01, 3.18346619901161753674e-01,
                 -1.10894694282396677476e-01, 3.54783043256182359371e-02,
                 -2.16637559486879084300e-03])
QA = Polynomial([1.0, 1.06420880400844228286e-01, 5.40397917702171048937e-01,
                 7.18286544141962662868e-02, 1.26171219808761642112e-01,
                 1.36370839120290507362e-02, 1.19844998467991074170e-02])
# erfc on [1.25, 1/0.35]
RA = Polynomial([-9.86494403484714822705e-03, -6.93858572707181764372e-01,
                 -1.05586262253232909814e01, -6.23753324503260060396e01,
                 -1.62396669462573470355e02, -1.84605092906711035994e02,
                 -8.12874355063065934246e01, -9.81432934416914548592e00])
SA = Polynomial([1.0, 1.96512716674392571292e01, 1.37657754143519042600e02,
                 4.34565877475229228821e02, 6.45387271733267880336e02,
                 4.29008140027567833386e02, 1.08635005541779435134e02,
                 6.57024977031928170135e00, -6.04244152148580987438e-02])
# erfc on [1/0.35, 6]
RB = Polynomial([-9.86494292470009928597e-03, -7.99283237680523006574e-01,
                 -1.77579549177547519889e01, -1.60636384855821916062e02,
                 -6.37566443368389627722e02, -1.02509513161107724954e03,
                 -4.83519191608651397019e02])
SB = Polynomial([1.0, 3.03380607434824582924e01, 3.25792512996573918826e02,
                 1.53672958608443695994e03, 3.19985821950859553908e03,
                 2.55305040643316442583e03, 4.74528541206955367215e02,
                 -2.24409524465858183362e01])

BIN_EDGES = np.array([2.0**-28, 0.84375, 1.25, 1 / 0.35, SATURATION])


def _erf_tiny(a:np.ndarray) -> np.ndarray:
    return (1 + EFX) * a

def _erf_small(a:np.ndarray) -> np.ndarray:
    z = a * a
    return a * (1 + PP(z) / QQ(z))

def _erf_mid(a:np.ndarray) -> np.ndarray:
    s = a - 1
    return ERX + PA(s) / QA(s)

def _erf_tail_a(a:np.ndarray) -> np.ndarray:
    s = 1 / (a * a)
    return 1 - np.exp(-a * a - 0.5625 + RA(s) / SA(s)) / a

def _erf_tail_b(a:np.ndarray) -> np.ndarray:
    s = 1 / (a * a)
    return 1 - np.exp(-a * a - 0.5625 + RB(s) / SB(s)) / a

def _erf_saturated(a:np.ndarray) -> np.ndarray:
    return np.ones_like(a)

ERF_BINS = (_erf_tiny, _erf_small, _erf_mid, _erf_tail_a, _erf_tail_b,
            _erf_saturated)


def erf(x:float|np.ndarray) -> float|np.ndarray:
    """
    Gauss error function, elementwise. Odd, nondecreasing, |erf(x)| <= 1.
    Returns a float for scalar input.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError('erf needs finite arguments')
    a = np.abs(arr).ravel()
    out = np.empty_like(a)
    bin_idx = np.searchsorted(BIN_EDGES, a, side='right')
    for idx, erf_in_bin in enumerate(ERF_BINS):
        mask = bin_idx == idx
        if np.any(mask):
            out[mask] = erf_in_bin(a[mask])
    out = np.copysign(out, arr.ravel()).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def _check_sigma(sigma:float|np.ndarray) -> None:
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError(f'sigma must be > 0, got {sigma}')

def _check_batch_size(B:float) -> None:
    if not (np.isfinite(B) and B > 0):
        raise ValueError(f'batch size must be > 0, got {B}')


def sign_mean(mu:float|np.ndarray, sigma:float|np.ndarray) -> float|np.ndarray:
    """
    E[sign(x)] for x ~ Normal(mu, sigma^2).
    """
    _check_sigma(sigma)
    return erf(np.asarray(mu) / (math.sqrt(2) * np.asarray(sigma)))


def sign_variance(mu:float|np.ndarray,
                  sigma:float|np.ndarray) -> float|np.ndarray:
    m = sign_mean(mu, sigma)
    return 1 - m * m


def _batch_argument(mu, sigma, B:float) -> np.ndarray:
    _check_sigma(sigma)
    _check_batch_size(B)
    return math.sqrt(B / 2) * np.asarray(mu, dtype=np.float64) \
        / np.asarray(sigma, dtype=np.float64)


def e_exact(mu_i:float|np.ndarray, sigma_i:float|np.ndarray,
            B:float) -> float|np.ndarray:
    """
    Expected sign of the batch-mean gradient, erf(sqrt(B/2) * mu / sigma).
    Exactly 0 for mu = 0 and exactly +-1 once the argument passes the
    double precision saturation point.
    """
    arg = _batch_argument(mu_i, sigma_i, B)
    saturated = np.abs(arg) > SATURATION
    clipped = np.where(saturated, 0.0, arg)
    result = np.where(saturated, np.sign(arg), erf(clipped))
    return float(result) if result.ndim == 0 else result


def e_approx(mu_i:float|np.ndarray, sigma_i:float|np.ndarray,
             B:float) -> float|np.ndarray:
    """
    The sigmoid-like closed form (mu/sigma) / sqrt(pi/(2B) + (mu/sigma)^2).
    """
    _check_sigma(sigma_i)
    _check_batch_size(B)
    r = np.asarray(mu_i, dtype=np.float64) / np.asarray(sigma_i,
                                                        dtype=np.float64)
    result = r / np.sqrt(math.pi / (2 * B) + r * r)
    return float(result) if result.ndim == 0 else result


def small_batch_e(mu_i:float|np.ndarray, sigma_i:float|np.ndarray,
                  B:float) -> float|np.ndarray:
    """
    Linearisation sqrt(2B/pi) * mu / sigma, valid for B far below the
    batch size bound pi*sigma^2/(2*mu^2).
    """
    _check_sigma(sigma_i)
    _check_batch_size(B)
    result = math.sqrt(2 * B / math.pi) * np.asarray(mu_i, dtype=np.float64) \
        / np.asarray(sigma_i, dtype=np.float64)
    return float(result) if result.ndim == 0 else result


def sign_batch_moments(stats:GradientStats, B:float) -> tuple:
    """
    Mean and diagonal covariance of sign(G_est) for a batch of size B.
    Coordinates are treated as independent, so the covariance is diagonal.
    """
    mean = np.atleast_1d(e_exact(stats.mu, stats.sigma, B))
    return mean, 1 - mean * mean


def approx_gap_scan(upper:float=5.0, step:float=1e-4) -> tuple:
    """
    Scans the erf argument a = sqrt(B/2)*mu/sigma over [0, upper] and returns
    (max |e_approx - e_exact|, a at the maximum). In terms of a the closed
    form reads a / sqrt(pi/4 + a^2).
    """
    if not (upper > 0 and step > 0):
        raise ValueError('upper and step must be > 0')
    a = np.arange(0.0, upper + step / 2, step)
    gap = np.abs(erf(a) - a / np.sqrt(math.pi / 4 + a * a))
    idx = int(np.argmax(gap))
    return float(gap[idx]), float(a[idx])
