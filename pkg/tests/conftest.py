from __future__ import annotations

import pytest

from ponzilens.fixtures import FIXTURE_CHAIN, FIXTURE_WALLET, FIXTURE_WITHDRAW
from ponzilens.pipeline import analyze_bytes


@pytest.fixture(scope="session")
def chain_result():
    return analyze_bytes(FIXTURE_CHAIN)


@pytest.fixture(scope="session")
def chain_report(chain_result):
    return chain_result.report


@pytest.fixture(scope="session")
def withdraw_result():
    return analyze_bytes(FIXTURE_WITHDRAW)


@pytest.fixture(scope="session")
def withdraw_report(withdraw_result):
    return withdraw_result.report


@pytest.fixture(scope="session")
def wallet_result():
    return analyze_bytes(FIXTURE_WALLET)


@pytest.fixture(scope="session")
def wallet_report(wallet_result):
    return wallet_result.report
