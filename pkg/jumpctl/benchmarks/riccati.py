import math
import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp, cumulative_trapezoid

from jumpctl.utils.errors import SolverError

#-----------------------------------------------------------------------------#
#------------------------------- riccati system ------------------------------#
#-----------------------------------------------------------------------------#

def entropy_constant(gamma, R):
    '''
        c_gamma = gamma / 2 * (m log(pi gamma) - log det R), zero without entropy
    '''
    if gamma == 0:
        return 0.
    m = R.shape[0]
    _, logdet = np.linalg.slogdet(R)
    return 0.5 * gamma * (m * math.log(math.pi * gamma) - logdet)

def jump_trace(H, alpha, lambdas):
    '''
        Tr(Lambda diag(alpha) H diag(alpha)) = sum_i lambda_i alpha_i^2 H_ii
    '''
    return float(np.sum(lambdas * alpha ** 2 * np.diag(H)))

def source_term(H, Sigma, alpha, lambdas, c_gamma):
    return float(np.trace(Sigma @ Sigma.T @ H)) + jump_trace(H, alpha, lambdas) + c_gamma


class RiccatiSystem:
    '''
        H' = beta H + Q - H B R^-1 B' H
        g' = beta g - Tr(Sigma Sigma' H) - Tr(Lambda diag(alpha) H diag(alpha)) - c_gamma
        for the coefficients of an LqModel
    '''

    def __init__(self, model):
        self.model = model
        self.d = model.state_dim
        self.beta = model.discount
        self.gamma = model.entropy_weight
        self.R = model.R
        self.Q = model.Q
        self.R_inv = np.linalg.inv(self.R)
        self.c_gamma = entropy_constant(self.gamma, self.R)

    def coefficients(self, t):
        m = self.model
        return m.B_matrix(t), m.Sigma_matrix(t), m.alpha_vector(t), m.lambda_vector(t)

    def stationary_coefficients(self, kind='limit'):
        m = self.model
        b, sigma, alpha, lambdas = [p.stationary_value for p in (m.b, m.sigma, m.alpha, m.lambdas)]
        return np.diag(b), np.diag(sigma), alpha, lambdas

    def dH(self, t, H):
        B = self.model.B_matrix(t)
        return self.beta * H + self.Q - H @ B @ self.R_inv @ B.T @ H

    def source(self, t, H):
        _, Sigma, alpha, lambdas = self.coefficients(t)
        return source_term(H, Sigma, alpha, lambdas, self.c_gamma)

    def dg(self, t, H, g):
        return self.beta * g - self.source(t, H)

    def flat_rhs(self, t, y):
        d = self.d
        H = y[:d*d].reshape(d, d)
        H = 0.5 * (H + H.T)
        return np.concatenate([self.dH(t, H).ravel(), [self.dg(t, H, y[-1])]])

    def flat_rhs_H(self, t, y):
        d = self.d
        H = y.reshape(d, d)
        return self.dH(t, 0.5 * (H + H.T)).ravel()

    def residual(self, times, H):
        '''
            max |H' - rhs| at interior grid points, H' by central differences
        '''
        if len(times) < 3:
            return 0.
        dH = (H[2:] - H[:-2]) / (times[2:] - times[:-2])[:, None, None]
        rhs = np.stack([self.dH(t, h) for t, h in zip(times[1:-1], H[1:-1])])
        return float(np.abs(dH - rhs).max())


#-----------------------------------------------------------------------------#
#--------------------------------- solutions ---------------------------------#
#-----------------------------------------------------------------------------#

class RiccatiSolution:
    '''
        H(t), g(t) on a time grid; constant solutions carry a single point,
        periodic ones are evaluated modulo the period, convergent ones hold
        their boundary values outside the grid
    '''

    def __init__(self, times, H, g, H_inf, g_inf, kind='constant', period=None, residual=0., iterations=0):
        self.times = np.asarray(times, dtype=np.float64)
        self.H = np.asarray(H, dtype=np.float64)
        self.g = np.asarray(g, dtype=np.float64)
        self.H_inf = np.asarray(H_inf, dtype=np.float64)
        self.g_inf = float(g_inf)
        self.kind = kind
        self.period = period
        self.residual = residual
        self.iterations = iterations
        self._H_flat = self.H.reshape(len(self.times), -1)

    def _local_time(self, t):
        if self.kind == 'periodic':
            return float(t) % self.period
        return float(t)

    def H_at(self, t):
        if self.kind == 'constant':
            return self.H_inf
        t = self._local_time(t)
        d = self.H.shape[-1]
        flat = np.array([np.interp(t, self.times, col) for col in self._H_flat.T])
        return flat.reshape(d, d)

    def g_at(self, t):
        if self.kind == 'constant':
            return self.g_inf
        return float(np.interp(self._local_time(t), self.times, self.g))

    def to_dict(self):
        return {
            'kind': self.kind,
            'period': self.period,
            'times': self.times.tolist(),
            'H': self.H.tolist(),
            'g': self.g.tolist(),
            'H_inf': self.H_inf.tolist(),
            'g_inf': self.g_inf,
            'residual': self.residual,
            'iterations': self.iterations,
        }


def solve_are(B, Sigma, alpha, lambdas, R, Q, beta, gamma):
    '''
        stationary pair (H, g):
            0 = beta H + Q - H B R^-1 B' H   (stabilizing branch)
            beta g = Tr(Sigma Sigma' H) + sum_i lambda_i alpha_i^2 H_ii + c_gamma
        written as the standard CARE with A = -beta/2 I and X = -H
    '''
    B, Sigma, R, Q = [np.atleast_2d(np.asarray(a, dtype=np.float64)) for a in (B, Sigma, R, Q)]
    alpha, lambdas = np.atleast_1d(alpha).astype(np.float64), np.atleast_1d(lambdas).astype(np.float64)
    d = B.shape[0]
    if not beta > 0:
        raise SolverError(f'discount must be positive, got {beta}')
    if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
        raise SolverError('control cost R must be positive definite')

    A = -0.5 * beta * np.eye(d)
    try:
        X = scipy.linalg.solve_continuous_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolverError(f'no stabilizing solution of the algebraic riccati equation: {e}')
    H = -0.5 * (X + X.T)

    feedback = B @ np.linalg.solve(R, B.T) @ H
    residual = np.abs(beta * H + Q - H @ feedback).max()
    if residual > 1e-8 * max(1., np.abs(Q).max()):
        raise SolverError(f'algebraic riccati residual {residual:.3e} too large')
    if np.linalg.eigvals(-0.5 * beta * np.eye(d) + feedback).real.max() >= 0:
        raise SolverError('riccati solution is not stabilizing')
    if np.linalg.eigvals(feedback).real.max() > 1e-10:
        raise SolverError('closed-loop drift of the riccati solution is not dissipative')

    g = source_term(H, Sigma, alpha, lambdas, entropy_constant(gamma, R)) / beta
    return H, g

def stationary_solution(model):
    system = RiccatiSystem(model)
    B, Sigma, alpha, lambdas = system.stationary_coefficients()
    H, g = solve_are(B, Sigma, alpha, lambdas, model.R, model.Q, model.discount, model.entropy_weight)
    return RiccatiSolution([0.], H[None], [g], H, g, kind='constant')


def _integrate_backward(system, rhs, y_end, t_end, ode_dt, method, rtol, atol):
    '''
        integrates from t_end down to 0 and returns (times, values) on an
        ascending grid of spacing ode_dt
    '''
    n = max(int(round(t_end / ode_dt)), 1)
    times = np.linspace(0., t_end, n + 1)
    if method == 'euler':
        ys = np.empty((n + 1, len(y_end)))
        ys[n] = y_end
        dt = t_end / n
        for k in range(n, 0, -1):
            ys[k-1] = ys[k] - dt * rhs(times[k], ys[k])
            if not np.isfinite(ys[k-1]).all():
                raise SolverError(f'riccati ODE blew up at t = {times[k-1]:.4f}')
        return times, ys
    elif method == 'dop853':
        sol = solve_ivp(rhs, (t_end, 0.), y_end, method='DOP853', t_eval=times[::-1], rtol=rtol, atol=atol)
        if not sol.success or not np.isfinite(sol.y).all():
            raise SolverError(f'riccati ODE integration failed: {sol.message}')
        return times, sol.y[:, ::-1].T
    raise ValueError(f'[ benchmarks/riccati ] unknown ODE method: {method}')


def integrate_riccati_backward(model, horizon, horizon_factor=3., ode_dt=1e-3, method='dop853',
        rtol=1e-11, atol=1e-12):
    '''
        convergent coefficients: start from the stationary pair at
        T_inf = horizon_factor * horizon and integrate back to 0;
        returns the solution restricted to [0, horizon]
    '''
    system = RiccatiSystem(model)
    stationary = stationary_solution(model)
    t_inf = horizon_factor * horizon
    d = system.d

    y_end = np.concatenate([stationary.H_inf.ravel(), [stationary.g_inf]])
    times, ys = _integrate_backward(system, system.flat_rhs, y_end, t_inf, ode_dt, method, rtol, atol)

    keep = times <= horizon + 0.5 * ode_dt
    times, ys = times[keep], ys[keep]
    H = ys[:, :d*d].reshape(-1, d, d)
    H = 0.5 * (H + H.transpose(0, 2, 1))
    g = ys[:, -1]
    residual = system.residual(times, H)
    print(f'[ benchmarks/riccati ] Backward solve on [0, {t_inf:g}] | residual {residual:.2e}')
    return RiccatiSolution(times, H, g, stationary.H_inf, stationary.g_inf,
        kind='convergent', residual=residual)


def solve_periodic_riccati(model, period=None, ode_dt=1e-3, method='dop853', tol=1e-10, max_iter=200,
        damping=1., rtol=1e-11, atol=1e-12):
    '''
        periodic coefficients: fixed point H(P) = H(0) of the backward period
        map, started from the stationary pair of the period-mean coefficients;
        g from the discounted one-period integral of the source term
    '''
    period = period or model.period
    if period is None:
        raise SolverError('periodic riccati solve needs a period')
    system = RiccatiSystem(model)
    d = system.d
    stationary = stationary_solution(model)

    X = stationary.H_inf.ravel()
    for iteration in range(1, max_iter + 1):
        _, ys = _integrate_backward(system, system.flat_rhs_H, X, period, ode_dt, method, rtol, atol)
        H0 = ys[0]
        delta = np.abs(H0 - X).max()
        X = X + damping * (H0 - X)
        if delta < tol:
            break
    else:
        raise SolverError(f'periodic shooting did not converge in {max_iter} iterations (gap {delta:.3e})')

    times, ys = _integrate_backward(system, system.flat_rhs_H, X, period, ode_dt, method, rtol, atol)
    H = ys.reshape(-1, d, d)
    H = 0.5 * (H + H.transpose(0, 2, 1))

    ## g(t) = e^{beta t} (G(t + P) - G(t)) / (1 - e^{-beta P}),  G(t) = int_0^t e^{-beta s} source(s) ds
    beta = system.beta
    n = len(times) - 1
    source = np.array([system.source(t, h) for t, h in zip(times, H)])
    source2 = np.concatenate([source, source[1:]])
    times2 = np.concatenate([times, times[1:] + period])
    G = cumulative_trapezoid(np.exp(-beta * times2) * source2, times2, initial=0.)
    g = np.exp(beta * times) * (G[n:] - G[:n+1]) / (1 - math.exp(-beta * period))

    residual = system.residual(times, H)
    print(f'[ benchmarks/riccati ] Periodic shooting converged in {iteration} iterations | '
        f'residual {residual:.2e}')
    return RiccatiSolution(times, H, g, stationary.H_inf, stationary.g_inf,
        kind='periodic', period=period, residual=residual, iterations=iteration)


#-----------------------------------------------------------------------------#
#--------------------------------- benchmark ---------------------------------#
#-----------------------------------------------------------------------------#

class LqBenchmark:
    '''
        pi*(u | t, x) = N(R^-1 B' H(t) x, gamma/2 R^-1),  V(t, x) = x' H(t) x + g(t)
    '''

    name = 'lq'

    def __init__(self, model, solution):
        self.model = model
        self.solution = solution
        self.system = RiccatiSystem(model)

    def gain(self, t):
        B = self.model.B_matrix(t)
        return self.system.R_inv @ B.T @ self.solution.H_at(t)

    def mean_action(self, t, x):
        '''
            x : [ B x d ] array
        '''
        return np.asarray(x) @ self.gain(t).T

    @property
    def covariance(self):
        return 0.5 * self.model.entropy_weight * self.system.R_inv

    def value(self, t, x):
        x = np.asarray(x)
        H = self.solution.H_at(t)
        return np.einsum('bi,ij,bj->b', x, H, x) + self.solution.g_at(t)

    def q_value(self, t, x, u):
        '''
            little q-function of the optimal policy
                q = V_t + b . grad V + 1/2 Tr(Sigma Sigma' hess V)
                    + sum_i lambda_i (V(x + alpha_i e_i) - V - alpha_i d_i V) + f - beta V
            with V_t from the riccati right-hand side
        '''
        x, u = np.asarray(x), np.asarray(u)
        H, g = self.solution.H_at(t), self.solution.g_at(t)
        dH, dg = self.system.dH(t, H), self.system.dg(t, H, g)
        B, Sigma, alpha, lambdas = self.system.coefficients(t)
        quad = lambda M, v: np.einsum('bi,ij,bj->b', v, M, v)

        V_t = quad(dH, x) + dg
        drift = 2 * np.einsum('bi,ij,bj->b', u @ B.T, H, x)
        diffusion = float(np.trace(Sigma @ Sigma.T @ H))
        jumps = jump_trace(H, alpha, lambdas)
        reward = -(quad(self.model.R, u) + quad(self.model.Q, x))
        value = quad(H, x) + g
        return V_t + drift + diffusion + jumps + reward - self.model.discount * value

    def policies(self):
        from .policies import LqFeedbackPolicy
        return [LqFeedbackPolicy(self)]

    def values(self):
        from .policies import LqValue
        return [LqValue(self)]

    def to_dict(self):
        return {
            'problem': 'lq',
            'gamma': self.model.entropy_weight,
            'beta': self.model.discount,
            'c_gamma': self.system.c_gamma,
            'covariance': self.covariance.tolist(),
            'riccati': self.solution.to_dict(),
        }


def solve_lq(model, horizon, ode_dt=1e-3, ode_method='dop853', ode_rtol=1e-11, ode_atol=1e-12,
        horizon_factor=3., shooting_tol=1e-10, shooting_max_iter=200):
    kind = model.profile_kind
    if kind == 'constant':
        solution = stationary_solution(model)
    elif kind == 'convergent':
        solution = integrate_riccati_backward(model, horizon, horizon_factor, ode_dt, ode_method, ode_rtol, ode_atol)
    else:
        solution = solve_periodic_riccati(model, ode_dt=ode_dt, method=ode_method, tol=shooting_tol,
            max_iter=shooting_max_iter, rtol=ode_rtol, atol=ode_atol)
    return LqBenchmark(model, solution)
