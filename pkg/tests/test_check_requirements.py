import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from check_requirements import check_requirements  # noqa: E402


class TestCheckRequirements:
    def test_declared_stack_imports(self, monkeypatch):
        monkeypatch.chdir(ROOT)
        assert check_requirements() == 0

    def test_missing_package(self, tmp_path, capsys):
        req = tmp_path / 'requirements.txt'
        req.write_text('# stack\nnumpy>=1.24\nno_such_package_surge\n')
        assert check_requirements(str(req)) == 1
        assert 'no_such_package_surge' in capsys.readouterr().out
