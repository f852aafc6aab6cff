import time
import math

class Progress:
	'''
		single-block terminal progress printer for the training loop;
		redraws the bar and a grid of `key : value` params in place
	'''

	def __init__(self, total, name='Progress', ncol=3, max_length=24, indent=0, line_width=100):
		self.total = total
		self.name = name
		self.ncol = ncol
		self.max_length = max_length
		self.indent = indent
		self.line_width = line_width

		self._step = 0
		self._prev_line = '\033[F'
		self._clear_line = ' ' * self.line_width

		self._pbar_size = self.ncol * self.max_length
		self._skip_lines = 0
		self._time0 = time.time()
		self._step0 = 0
		self.lines = ['']
		self.fraction = f'0 / {self.total}'

	def update(self, description, n=1):
		self._step += n
		self.set_description(description)

	def set_description(self, params=()):
		if type(params) == dict:
			params = sorted(params.items())

		self._clear()
		percent, self.fraction = self._format_percent(self._step, self.total)
		speed = self._format_speed(self._step)

		chunks = [params[i:i+self.ncol] for i in range(0, len(params), self.ncol)]
		self.lines = [self._format_chunk(chunk) for chunk in chunks]
		padding = '\n' + ' ' * self.indent
		params_string = ''.join(padding + line for line in self.lines)

		print(f'{percent} | {speed}{params_string}', flush=True)
		self._skip_lines = math.ceil(len(params) / self.ncol) + 1

	def stamp(self):
		params = ' | '.join(self.lines)
		self._clear()
		print(f'[ {self.name} ] {self.fraction} {params}', flush=True)
		self._skip_lines = 0

	def close(self):
		self._clear()
		self._skip_lines = 0

	def _clear(self):
		if not self._skip_lines:
			return
		position = self._prev_line * self._skip_lines
		empty = '\n'.join([self._clear_line for _ in range(self._skip_lines)])
		print(position, end='')
		print(empty)
		print(position, end='')

	def _format_percent(self, n, total):
		if total:
			percent = n / float(total)
			complete = int(percent * self._pbar_size)
			pbar = '#' * complete + ' ' * (self._pbar_size - complete)
			fraction = f'{n} / {total}'
			return f'{fraction} [{pbar}] {int(percent * 100):3d}%', fraction
		return f'{n} iterations', f'{n}'

	def _format_speed(self, n):
		elapsed = max(time.time() - self._time0, 1e-9)
		return f'{(n - self._step0) / elapsed:.1f} Hz'

	def _format_chunk(self, chunk):
		return ' | '.join(f'{k} : {v}'[:self.max_length] for k, v in chunk)

class Silent:

	def __init__(self, *args, **kwargs):
		pass

	def __getattr__(self, attr):
		return lambda *args, **kwargs: None
