import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.integrate import trapezoid

from jumpctl.utils.errors import SolverError

#-----------------------------------------------------------------------------#
#------------------------------ standard merton ------------------------------#
#-----------------------------------------------------------------------------#

def merton_foc(u, mu, r, sigma, lam, alpha, p):
    '''
        (mu - r) + (p - 1) sigma^2 u + lam alpha ((1 + alpha u)^(p-1) - 1)
    '''
    return (mu - r) + (p - 1) * sigma ** 2 * u + lam * alpha * ((1 + alpha * u) ** (p - 1) - 1)

def merton_growth(u, mu, r, sigma, lam, alpha, p):
    '''
        E[d(X^p)] / X^p along the constant fraction u
    '''
    return p * (r + (mu - r) * u) + 0.5 * p * (p - 1) * sigma ** 2 * u ** 2 \
        + lam * ((1 + alpha * u) ** p - 1 - p * alpha * u)

def _bracket(fn, lower, upper, eps):
    '''
        expands the open sides of [lower, upper] until fn changes sign
    '''
    lo = lower + eps if lower is not None else -1.
    hi = upper - eps if upper is not None else 1.
    for _ in range(200):
        if fn(lo) > 0 and fn(hi) < 0:
            return lo, hi
        if fn(lo) <= 0:
            if lower is not None:
                break
            lo = 2 * lo - 1
        if fn(hi) >= 0:
            if upper is not None:
                break
            hi = 2 * hi + 1
    raise SolverError(f'first-order condition has no sign change on [{lo:g}, {hi:g}]')


class MertonBenchmark:
    '''
        constant fraction u*, V(x) = (h* / p) x^p
    '''

    name = 'merton-standard'

    def __init__(self, u_star, h_star, mu, r, sigma, lam, alpha, p, beta, foc_residual=0.):
        self.u_star = float(u_star)
        self.h_star = float(h_star)
        self.mu, self.r, self.sigma = mu, r, sigma
        self.lam, self.alpha, self.p = lam, alpha, p
        self.beta = beta
        self.foc_residual = float(foc_residual)

    def value(self, x):
        x = np.maximum(np.asarray(x, dtype=np.float64), 1e-8)
        return self.h_star / self.p * x ** self.p

    def policies(self):
        from .policies import ConstantPolicy
        return [ConstantPolicy([self.u_star])]

    def values(self):
        from .policies import MertonValue
        return [MertonValue(self.h_star, self.p)]

    def to_dict(self):
        return {
            'problem': self.name,
            'u_star': self.u_star,
            'h_star': self.h_star,
            'foc_residual': self.foc_residual,
            'params': dict(mu=self.mu, r=self.r, sigma=self.sigma, lam=self.lam,
                alpha=self.alpha, p=self.p, beta=self.beta),
        }


def solve_merton_standard(mu, r, sigma, lam, alpha, p, beta, root_eps=1e-9, n_check=1000):
    '''
        u* from the first-order condition (bracketed brentq, then Newton polish),
        h* = 1 / (beta - growth(u*))
    '''
    if not 0 < p < 1:
        raise SolverError(f'risk aversion p must lie in (0, 1), got {p}')
    if not sigma > 0:
        raise SolverError(f'volatility must be positive, got {sigma}')

    fn = lambda u: merton_foc(u, mu, r, sigma, lam, alpha, p)
    ## wealth stays positive across a jump: 1 + alpha u > 0
    lower = -1 / alpha if alpha > 0 else None
    upper = -1 / alpha if alpha < 0 else None
    lo, hi = _bracket(fn, lower, upper, root_eps)

    ## strictly decreasing on the bracket, so the root is unique
    grid = np.linspace(lo, hi, n_check)
    if not (np.diff(fn(grid)) < 0).all():
        raise SolverError('first-order condition is not strictly decreasing on its bracket')

    u_star = brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(5):
        slope = (p - 1) * sigma ** 2 + lam * alpha ** 2 * (p - 1) * (1 + alpha * u_star) ** (p - 2)
        step = fn(u_star) / slope
        if not np.isfinite(step):
            break
        u_star -= step

    residual = abs(fn(u_star))
    if residual > 1e-10:
        raise SolverError(f'first-order condition residual {residual:.3e} too large')
    if 1 + alpha * u_star <= 0:
        raise SolverError(f'jump leaves wealth non-positive at u* = {u_star:g}')

    denominator = beta - merton_growth(u_star, mu, r, sigma, lam, alpha, p)
    if not denominator > 0:
        raise SolverError(f'discount {beta} does not dominate the growth rate; h* <= 0')
    h_star = 1 / denominator

    print(f'[ benchmarks/merton ] u* = {u_star:.6f} | h* = {h_star:.6f} | residual {residual:.1e}')
    return MertonBenchmark(u_star, h_star, mu, r, sigma, lam, alpha, p, beta, residual)


#-----------------------------------------------------------------------------#
#-------------------------- entropy-regularized grid -------------------------#
#-----------------------------------------------------------------------------#

def difference_matrices(x):
    '''
        first and second derivative matrices on a uniform grid: central in the
        interior, one-sided first derivative and copied second derivative at the ends
    '''
    n = len(x)
    h = x[1] - x[0]
    D1 = np.zeros((n, n))
    D2 = np.zeros((n, n))
    idx = np.arange(1, n - 1)
    D1[idx, idx - 1], D1[idx, idx + 1] = -0.5 / h, 0.5 / h
    D2[idx, idx - 1], D2[idx, idx], D2[idx, idx + 1] = 1 / h**2, -2 / h**2, 1 / h**2
    D1[0, :3] = np.array([-3., 4., -1.]) / (2 * h)
    D1[-1, -3:] = np.array([1., -4., 3.]) / (2 * h)
    D2[0], D2[-1] = D2[1], D2[-2]
    return D1, D2

def interpolation_weights(x, y):
    '''
        left index and weight for linear interpolation of grid values at y,
        extrapolating linearly from the end segments
    '''
    h = x[1] - x[0]
    idx = np.clip(np.floor((y - x[0]) / h).astype(int), 0, len(x) - 2)
    theta = (y - x[idx]) / h
    return idx, theta


class MertonEntropyBenchmark:
    '''
        V on an x-grid and the Gibbs density pi*(u | x) = exp(H / gamma) / Z
        on the product grid
    '''

    name = 'merton-entropy'

    def __init__(self, x, u, V, density, gamma, beta, params, residual, iterations, n_extrapolated):
        self.x = np.asarray(x)
        self.u = np.asarray(u)
        self.V = np.asarray(V)
        self.density = np.asarray(density)
        self.gamma = gamma
        self.beta = beta
        self.params = params
        self.residual = residual
        self.iterations = iterations
        self.n_extrapolated = n_extrapolated

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        idx, theta = interpolation_weights(self.x, x)
        return (1 - theta) * self.V[idx] + theta * self.V[idx + 1]

    def density_at(self, x):
        '''
            density rows interpolated linearly in x (clamped to the grid) [ B x n_u ]
        '''
        x = np.clip(np.atleast_1d(np.asarray(x, dtype=np.float64)), self.x[0], self.x[-1])
        idx, theta = interpolation_weights(self.x, x)
        return (1 - theta)[:, None] * self.density[idx] + theta[:, None] * self.density[idx + 1]

    @property
    def mode(self):
        return self.u[self.density.argmax(axis=-1)]

    def normalization_error(self):
        return float(np.abs(trapezoid(self.density, self.u, axis=-1) - 1).max())

    def policies(self):
        from .policies import GibbsGridPolicy
        return [GibbsGridPolicy(self)]

    def values(self):
        from .policies import GridValue
        return [GridValue(self.x, self.V)]

    def to_dict(self):
        return {
            'problem': self.name,
            'gamma': self.gamma,
            'beta': self.beta,
            'params': self.params,
            'x': self.x.tolist(),
            'u': self.u.tolist(),
            'V': self.V.tolist(),
            'density': self.density.tolist(),
            'residual': self.residual,
            'iterations': self.iterations,
            'n_extrapolated': self.n_extrapolated,
        }


class _MertonGrid:
    '''
        the Hamiltonian H(x, u; V) = x^p / p + (r + u(mu - r)) x V' + 1/2 sigma^2 u^2 x^2 V''
            + lam (V(x(1 + alpha u)) - V - alpha u x V')
        and the generator of a grid policy
    '''

    def __init__(self, x, u, mu, r, sigma, lam, alpha, p):
        self.x, self.u = x, u
        self.lam, self.p = lam, p
        self.D1, self.D2 = difference_matrices(x)
        self.weights = self._trapezoid_weights(u)

        X, U = np.meshgrid(x, u, indexing='ij')
        self.drift = (r + U * (mu - r)) * X
        self.second = 0.5 * sigma ** 2 * U ** 2 * X ** 2
        self.compensator = alpha * U * X
        jump_target = X * (1 + alpha * U)
        self.jump_idx, self.jump_theta = interpolation_weights(x, jump_target)
        self.n_extrapolated = int(((jump_target < x[0]) | (jump_target > x[-1])).sum()) if lam > 0 else 0
        self.utility = x ** p / p

    @staticmethod
    def _trapezoid_weights(u):
        w = np.zeros_like(u)
        du = np.diff(u)
        w[:-1] += 0.5 * du
        w[1:] += 0.5 * du
        return w

    def hamiltonian(self, V):
        dV, d2V = self.D1 @ V, self.D2 @ V
        V_jump = (1 - self.jump_theta) * V[self.jump_idx] + self.jump_theta * V[self.jump_idx + 1]
        return self.utility[:, None] + self.drift * dV[:, None] + self.second * d2V[:, None] \
            + self.lam * (V_jump - V[:, None] - self.compensator * dV[:, None])

    def gibbs(self, V, gamma):
        '''
            (density, log Z) with density normalized under the trapezoid weights
        '''
        logits = self.hamiltonian(V) / gamma
        log_Z = logsumexp(logits, b=self.weights[None], axis=-1)
        return np.exp(logits - log_Z[:, None]), log_Z

    def evaluate(self, density, gamma, beta):
        '''
            value of a grid policy: solves
                beta V - sum_u w pi (L^u V) = x^p / p + gamma * entropy
        '''
        n = len(self.x)
        wp = density * self.weights[None]
        rows = np.arange(n)

        first = (wp * (self.drift - self.lam * self.compensator)).sum(axis=-1)
        second = (wp * self.second).sum(axis=-1)
        generator = first[:, None] * self.D1 + second[:, None] * self.D2 - self.lam * np.eye(n)

        J = np.zeros((n, n))
        row_idx = np.broadcast_to(rows[:, None], self.jump_idx.shape)
        np.add.at(J, (row_idx, self.jump_idx), wp * (1 - self.jump_theta))
        np.add.at(J, (row_idx, self.jump_idx + 1), wp * self.jump_theta)
        generator += self.lam * J

        entropy = -(wp * np.log(np.maximum(density, 1e-300))).sum(axis=-1)
        A = beta * np.eye(n) - generator
        try:
            return np.linalg.solve(A, self.utility + gamma * entropy)
        except np.linalg.LinAlgError as e:
            raise SolverError(f'policy evaluation system is singular: {e}')


def solve_merton_entropy_grid(mu, r, sigma, lam, alpha, p, beta, gamma,
        x_min=0.2, x_max=3.0, n_x=500, u_min=0., u_max=1., n_u=400,
        damping=0.5, tol=1e-8, max_iter=500):
    '''
        damped soft policy iteration for
            V = (gamma / beta) log int exp(H(x, u; V) / gamma) du
        each sweep evaluates the current Gibbs policy by a linear solve,
        damps the value update and re-forms the Gibbs density
    '''
    if not gamma > 0:
        raise SolverError(f'entropy-regularized solve needs gamma > 0, got {gamma}')
    x = np.linspace(x_min, x_max, n_x)
    u = np.linspace(u_min, u_max, n_u)
    grid = _MertonGrid(x, u, mu, r, sigma, lam, alpha, p)
    if grid.n_extrapolated:
        print(f'[ benchmarks/merton ] Warning: {grid.n_extrapolated} jump targets leave the x-grid '
            '(linear extrapolation)', flush=True)

    ## start from the unregularized power-law value where it exists
    try:
        V = solve_merton_standard(mu, r, sigma, lam, alpha, p, beta).value(x)
    except SolverError:
        V = x ** p / (p * beta)

    residual = np.inf
    for iteration in range(1, max_iter + 1):
        density, _ = grid.gibbs(V, gamma)
        V = (1 - damping) * V + damping * grid.evaluate(density, gamma, beta)
        if not np.isfinite(V).all():
            raise SolverError(f'grid value diverged at iteration {iteration}')
        _, log_Z = grid.gibbs(V, gamma)
        residual = float(np.abs(V - gamma / beta * log_Z).max())
        if residual < tol:
            break
    else:
        raise SolverError(f'entropy fixed point did not contract in {max_iter} iterations '
            f'(residual {residual:.3e})')

    density, _ = grid.gibbs(V, gamma)
    params = dict(mu=mu, r=r, sigma=sigma, lam=lam, alpha=alpha, p=p)
    solution = MertonEntropyBenchmark(x, u, V, density, gamma, beta, params, residual, iteration,
        grid.n_extrapolated)
    if solution.normalization_error() > 1e-6:
        raise SolverError(f'gibbs density off normalization by {solution.normalization_error():.2e}')
    print(f'[ benchmarks/merton ] Gibbs fixed point after {iteration} iterations | residual {residual:.2e}')
    return solution
