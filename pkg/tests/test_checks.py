import json

from discerning_td import verify_all
from discerning_td.checks import REGISTRY


class TestVerifyAll:
    def test_fresh_build_passes_every_check(self):
        results = verify_all()
        assert len(results) == len(REGISTRY)
        failed = [r.check for r in results if not r.passed]
        assert failed == []

    def test_filter_selects_by_substring(self):
        results = verify_all("stationary")
        names = {r.check for r in results}
        assert names == {"stationary-fixed-point", "stationary-empirical"}

    def test_report_stable_across_invocations(self):
        a = [r.to_dict() for r in verify_all("identity")]
        b = [r.to_dict() for r in verify_all("identity")]
        assert json.dumps(a, default=str) == json.dumps(b, default=str)

    def test_report_schema(self):
        for res in verify_all("priority"):
            payload = res.to_dict()
            assert {"check", "inputs", "margin", "pass"} <= set(payload)
            json.dumps(payload)  # must be serializable as emitted
