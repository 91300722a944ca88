# criterion number -> (status, detail), shared by test_acceptance and conftest
RESULTS = {}
