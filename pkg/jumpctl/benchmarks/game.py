import numpy as np

from jumpctl.utils.errors import SolverError


class GameSystem:
    '''
        per-agent objective given the others' controls u_{-i}:
            Psi_i(u) = -chi b u + 1/2 chi^2 (eta^2 + sigma^2) u^2 - chi rho sigma [u sigma]_i u
                + lam_i (exp(-chi alpha u) - 1 + chi alpha u)
                + lam0 (exp(-chi xi u + rho [u xi]_i) + chi xi u)
        with [v]_i = (1/n) sum_{j != i} v_j
    '''

    def __init__(self, b, eta, sigma, alpha, xi, lambdas, lambda0, varrho, varpi):
        self.b, self.eta, self.sigma, self.alpha, self.xi, self.lambdas, self.varrho = [
            np.asarray(v, dtype=np.float64) for v in (b, eta, sigma, alpha, xi, lambdas, varrho)
        ]
        self.n = len(self.b)
        self.varpi = np.broadcast_to(np.asarray(varpi, dtype=np.float64), (self.n,)).copy()
        self.lambda0 = float(lambda0)
        if (self.varrho <= 0).any():
            raise SolverError('risk tolerances varrho must be positive')
        self.chi = (1 - self.varpi / self.n) / self.varrho
        self.rho = self.varpi / self.varrho

    def others(self, v, i):
        return (np.sum(v) - v[i]) / self.n

    def psi(self, i, u, controls):
        chi, rho = self.chi[i], self.rho[i]
        u_sigma, u_xi = self.others(controls * self.sigma, i), self.others(controls * self.xi, i)
        return -chi * self.b[i] * u \
            + 0.5 * chi**2 * (self.eta[i]**2 + self.sigma[i]**2) * u**2 \
            - chi * rho * self.sigma[i] * u_sigma * u \
            + self.lambdas[i] * (np.exp(-chi * self.alpha[i] * u) - 1 + chi * self.alpha[i] * u) \
            + self.lambda0 * (np.exp(-chi * self.xi[i] * u + rho * u_xi) + chi * self.xi[i] * u)

    def psi_prime(self, i, u, controls):
        chi, rho = self.chi[i], self.rho[i]
        u_sigma, u_xi = self.others(controls * self.sigma, i), self.others(controls * self.xi, i)
        return -chi * self.b[i] \
            + chi**2 * (self.eta[i]**2 + self.sigma[i]**2) * u \
            - chi * rho * self.sigma[i] * u_sigma \
            + self.lambdas[i] * chi * self.alpha[i] * (1 - np.exp(-chi * self.alpha[i] * u)) \
            + self.lambda0 * chi * self.xi[i] * (1 - np.exp(-chi * self.xi[i] * u + rho * u_xi))

    def psi_second(self, i, u, controls):
        chi, rho = self.chi[i], self.rho[i]
        u_xi = self.others(controls * self.xi, i)
        return chi**2 * (self.eta[i]**2 + self.sigma[i]**2) \
            + self.lambdas[i] * (chi * self.alpha[i])**2 * np.exp(-chi * self.alpha[i] * u) \
            + self.lambda0 * (chi * self.xi[i])**2 * np.exp(-chi * self.xi[i] * u + rho * u_xi)

    def best_response(self, i, controls, tol=1e-12, max_iter=100):
        '''
            Newton on the strictly convex Psi_i with step halving
        '''
        u = float(controls[i])
        grad = self.psi_prime(i, u, controls)
        for _ in range(max_iter):
            if abs(grad) < tol:
                return u
            curvature = self.psi_second(i, u, controls)
            if not curvature > 0:
                raise SolverError(f'objective of agent {i} is not strictly convex at u = {u:g}')
            step = grad / curvature
            for _ in range(60):
                candidate = u - step
                candidate_grad = self.psi_prime(i, candidate, controls)
                if np.isfinite(candidate_grad) and abs(candidate_grad) < abs(grad):
                    break
                step *= 0.5
            u, grad = candidate, candidate_grad
        if abs(grad) < 1e3 * tol:
            return u
        raise SolverError(f'best response of agent {i} did not converge (|Psi\'| = {abs(grad):.2e})')

    def constant(self, i, controls):
        '''
            C_i, the part of the value growth rate driven by the other agents
        '''
        n, rho = self.n, self.rho[i]
        mask = np.arange(n) != i
        u_b = self.others(controls * self.b, i)
        u_sigma = self.others(controls * self.sigma, i)
        u_xi = self.others(controls * self.xi, i)
        idio = np.sum((controls * self.eta)[mask] ** 2) / n**2
        scaled = rho * (controls * self.alpha)[mask] / n
        jumps = np.sum(self.lambdas[mask] * (np.exp(scaled) - 1 - scaled))
        return rho * u_b + 0.5 * rho**2 * (idio + u_sigma**2) + jumps - self.lambda0 * rho * u_xi


class GameBenchmark:
    '''
        constant equilibrium controls u*, V^i(x, y) = -exp(-chi_i x + rho_i y) / (beta - Lambda_i*)
    '''

    name = 'game'

    def __init__(self, system, u_star, beta, iterations=0):
        self.system = system
        self.u_star = np.asarray(u_star, dtype=np.float64)
        self.beta = beta
        self.iterations = iterations
        self.n = system.n
        self.chi, self.rho = system.chi, system.rho
        self.psi = np.array([system.psi(i, u_star[i], self.u_star) for i in range(self.n)])
        self.C = np.array([system.constant(i, self.u_star) for i in range(self.n)])
        self.Lambda = self.psi + self.C - system.lambda0
        self.residuals = np.array([system.psi_prime(i, u_star[i], self.u_star) for i in range(self.n)])

    def value(self, i, x, y):
        return -np.exp(-self.chi[i] * np.asarray(x) + self.rho[i] * np.asarray(y)) / (self.beta - self.Lambda[i])

    def policies(self):
        from .policies import ConstantPolicy
        return [ConstantPolicy([u]) for u in self.u_star]

    def values(self):
        from .policies import GameValue
        return [GameValue(self.chi[i], self.rho[i], self.beta - self.Lambda[i]) for i in range(self.n)]

    def to_dict(self):
        return {
            'problem': self.name,
            'n': self.n,
            'beta': self.beta,
            'u_star': self.u_star.tolist(),
            'chi': self.chi.tolist(),
            'rho': self.rho.tolist(),
            'psi': self.psi.tolist(),
            'C': self.C.tolist(),
            'Lambda': self.Lambda.tolist(),
            'residuals': self.residuals.tolist(),
            'iterations': self.iterations,
        }


def solve_game(b, eta, sigma, alpha, xi, lambdas, lambda0, varrho, varpi, beta,
        damping=0.5, newton_tol=1e-12, tol=1e-12, max_outer=200, min_damping=1e-3):
    '''
        damped Jacobi iteration over best responses; the damping is halved
        whenever the update grows
    '''
    system = GameSystem(b, eta, sigma, alpha, xi, lambdas, lambda0, varrho, varpi)
    controls = np.zeros(system.n)
    previous = np.inf
    for iteration in range(1, max_outer + 1):
        response = np.array([system.best_response(i, controls, newton_tol) for i in range(system.n)])
        change = np.abs(response - controls).max()
        if change < tol:
            controls = response
            break
        if change > previous:
            damping *= 0.5
            if damping < min_damping:
                raise SolverError(f'equilibrium iteration oscillates (change {change:.3e})')
        controls = (1 - damping) * controls + damping * response
        previous = change
    else:
        raise SolverError(f'equilibrium iteration did not converge in {max_outer} iterations')

    solution = GameBenchmark(system, controls, beta, iteration)
    residual = np.abs(solution.residuals).max()
    if residual > 1e-10:
        raise SolverError(f'equilibrium first-order residual {residual:.3e} too large')
    if not (beta > solution.Lambda).all():
        raise SolverError(f'discount {beta} does not exceed Lambda* = {solution.Lambda.tolist()}')

    print(f'[ benchmarks/game ] u* = {np.round(controls, 6).tolist()} | '
        f'{iteration} iterations | residual {residual:.1e}')
    return solution
