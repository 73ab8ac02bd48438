from hypothesis import Phase, settings

# The explain phase can take minutes on a failing CSV example; shrinking is enough.
settings.register_profile("default", deadline=None,
                          phases=[Phase.explicit, Phase.reuse, Phase.generate, Phase.shrink])
settings.load_profile("default")
