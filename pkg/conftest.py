import pytest


@pytest.fixture(autouse=True)
def single_worker(monkeypatch):
    # joblib pools stay in-process for unit runs
    monkeypatch.setenv('ROBUST_LASSO_WORKERS', '1')
