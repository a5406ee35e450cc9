"""
From error vectors to a threshold
=================================

The statistical half of the detector on its own. It covers the Gaussian
error model, Mahalanobis distances and the truncated-normal cutoff.
"""

import numpy as np

from greenhouse.stats import (
    fit_mvn,
    fit_truncated_normal,
    mahalanobis_many,
    std_normal_quantile,
    truncated_quantile,
)

rng = np.random.default_rng(0)

###############################################################################
# Stand-in error vectors. Forecast errors at neighbouring horizons are
# correlated, so we draw them with an AR(1)-like covariance.
F = 8
idx = np.arange(F)
cov = 0.05 * 0.8 ** np.abs(idx[:, None] - idx[None, :])
errors = rng.multivariate_normal(np.zeros(F), cov, size=1500)

fit_part, calib_part, test_part = errors[:500], errors[500:1000], errors[1000:]
N = fit_mvn(fit_part)
print("largest covariance error: %.4f" % np.max(np.abs(N.covariance - cov)))

###############################################################################
# The Euclidean length of an error vector ignores that correlation. The
# Mahalanobis distance whitens it first. Its square is close to chi-square
# with F degrees of freedom.
d_calib = mahalanobis_many(N, calib_part)
print("mean squared distance %.2f (F = %d)" % (np.mean(d_calib ** 2), F))

###############################################################################
# Distances are non-negative. A normal truncated at zero, fitted by matching
# moments, gives a threshold for each percentile rho.
T = fit_truncated_normal(d_calib)
print("truncated normal: loc=%.3f scale=%.3f" % (T.loc, T.scale))
d_test = mahalanobis_many(N, test_part)
for rho in (0.5, 0.9, 0.99, 0.999):
    tau = truncated_quantile(T, rho)
    print("rho=%-6g tau=%.3f  held-out exceedance %.3f" % (rho, tau, np.mean(d_test > tau)))

###############################################################################
# The moment fit is symmetric, so it underestimates how heavy the right tail
# of a chi-like distance is. Exceedance at high rho runs above 1 - rho.
# The quantile routine underneath is accurate to double precision.
print("z(0.975) = %.10f" % std_normal_quantile(0.975))
