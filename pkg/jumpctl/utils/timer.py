import time

class Timer:

	def __init__(self):
		self._start = time.perf_counter()
		self._origin = self._start

	def __call__(self, reset=True):
		now = time.perf_counter()
		diff = now - self._start
		if reset:
			self._start = now
		return diff

	@property
	def total(self):
		'''
			seconds since construction, unaffected by resets
		'''
		return time.perf_counter() - self._origin
