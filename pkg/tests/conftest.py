import hypothesis

# bit-level reference loops are slow per example; give them room
hypothesis.settings.register_profile("suite", deadline=None, max_examples=150)
hypothesis.settings.load_profile("suite")
