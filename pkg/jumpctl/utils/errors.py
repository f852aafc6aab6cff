'''
    exception types shared by every subpackage;
    the cli maps ConfigError to exit code 1 and NumericalError to exit code 2
'''


class JumpctlError(Exception):
    pass


class ConfigError(JumpctlError, ValueError):

    def __init__(self, path, message):
        self.path = path
        super().__init__(f'{path}: {message}' if path else message)


class NumericalError(JumpctlError, RuntimeError):
    pass


class StateExplosionError(NumericalError):

    def __init__(self, step, bound, detail=''):
        self.step = step
        self.bound = bound
        super().__init__(f'state left the box |x| <= {bound:g} at step {step} {detail}'.strip())


class DivergenceError(NumericalError):

    def __init__(self, iteration, what, value):
        self.iteration = iteration
        super().__init__(f'training diverged at iteration {iteration}: {what} = {value}')


class SaturationError(NumericalError):
    pass


class SolverError(NumericalError):
    pass
