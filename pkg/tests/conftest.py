from hypothesis import settings

# Property tests should not introduce run-to-run nondeterminism into the
# suite; examples are derived from the test body instead of fresh entropy.
settings.register_profile("deterministic", derandomize=True, deadline=None)
settings.load_profile("deterministic")
