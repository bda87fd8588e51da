from varfield.config import Settings
from varfield.errors import ModelParseError


def test_defaults():
    settings = Settings()
    assert settings.max_order == 12
    assert settings.tol_identity == 1e-9
    assert settings.tol_fd == 1e-6
    assert settings.threads == 1


def test_environment_override(monkeypatch):
    monkeypatch.setenv("VARFIELD_THREADS", "4")
    monkeypatch.setenv("VARFIELD_OUTPUT_FORMAT", "latex")
    settings = Settings()
    assert settings.threads == 4
    assert settings.output_format == "latex"


def test_resolve_model_falls_back_to_shipped_models(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    resolved = Settings().resolve_model("free_particle.vf")
    assert resolved.is_file()
    assert resolved.parent.name == "models"


def test_resolve_model_keeps_unknown_paths():
    assert str(Settings().resolve_model("nowhere/missing.vf")) == "nowhere/missing.vf"


def test_parse_error_message_carries_position():
    assert str(ModelParseError("boom", 3, 7)) == "line 3, column 7: boom"
    assert str(ModelParseError("boom", 3)) == "line 3: boom"
    assert str(ModelParseError("boom")) == "boom"
