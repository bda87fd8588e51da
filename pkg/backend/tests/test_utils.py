import orjson
import pytest

from varfield import utils
from varfield.errors import DerivationCancelled


def test_sse_event_with_event_name():
    payload = utils.sse_event({"stage": "euler"}, event="error")
    head, data, _ = payload.decode("utf-8").split("\n", 2)
    assert head == "event: error"
    assert orjson.loads(data[len("data: "):]) == {"stage": "euler"}


def test_sse_event_without_event_name():
    assert utils.sse_event({"a": 1}) == b'data: {"a":1}\n\n'
    assert utils.sse_event({"a": 1}, event="error") == b'event: error\ndata: {"a":1}\n\n'


def test_utc_now_has_second_precision():
    stamp = utils.utc_now()
    assert stamp.endswith("+00:00")
    assert "." not in stamp


def test_cancel_token_without_deadline_never_expires():
    token = utils.CancelToken.after(None)
    assert not token.expired
    token.check()


def test_expired_cancel_token_raises():
    token = utils.CancelToken(deadline=0.0)
    assert token.expired
    with pytest.raises(DerivationCancelled):
        utils.check_cancel(token)


def test_check_cancel_accepts_none():
    utils.check_cancel(None)
