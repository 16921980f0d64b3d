import json

import numpy as np
import pytest

from app import main
from services.codec_service import canonicalize
from services.network_service import read_btn, same_parameters

XOR_BTN = """BTN v1
depth 2
dims 2 2 1
layer 1
11
11
b: 0 2
g: 1 -1
layer 2
11
b: -1
g: 1
"""


@pytest.fixture
def xor_file(tmp_path):
    path = tmp_path / 'xor.btn'
    path.write_text(XOR_BTN)
    return str(path)


def test_eval_single_input_and_all(xor_file, capsys):
    assert main(['--quiet', 'eval', '--net', xor_file, '--input', '10']) == 0
    assert capsys.readouterr().out.strip() == '1'
    assert main(['--quiet', 'eval', '--net', xor_file, '--all']) == 0
    assert capsys.readouterr().out.splitlines() == ['00 0', '01 1', '10 1', '11 0']


def test_eval_shape_errors(xor_file, tmp_path):
    assert main(['--quiet', 'eval', '--net', xor_file, '--input', '101']) == 4
    assert main(['--quiet', 'eval', '--net', xor_file, '--input', '1x']) == 4
    bad = tmp_path / 'bad.btn'
    bad.write_text(XOR_BTN.replace('b: -1', 'b: -1 0'))
    assert main(['--quiet', 'eval', '--net', str(bad), '--input', '10']) == 4
    assert main(['--quiet', 'eval', '--net', str(tmp_path / 'missing.btn'), '--input', '10']) == 1


def test_build_memorizer_and_evaluate(tmp_path, capsys):
    data = tmp_path / 'train.ds'
    rows = ['0000 1', '0110 0', '1011 1', '1111 0', '0101 1', '0110 0']
    data.write_text('\n'.join(rows) + '\n')
    out = tmp_path / 'memo.btn'
    assert main(['--quiet', 'build-memorizer', '--dataset', str(data), '--out', str(out), '--seed', '3']) == 0
    printed = capsys.readouterr().out
    assert '"train_risk": 0.0' in printed
    report = json.loads(printed[printed.index('{'):printed.rindex('}') + 1])
    assert report['seed'].startswith('hash ')
    assert 'breakpoints ' in report['seed'] and 'field ' in report['seed']
    assert main(['--quiet', 'eval', '--net', str(out), '--all']) == 0
    table = dict(line.split() for line in capsys.readouterr().out.splitlines())
    for row in rows:
        x, y = row.split()
        assert table[x] == y


def test_build_memorizer_exit_codes(tmp_path):
    clash = tmp_path / 'clash.ds'
    clash.write_text('011 1\n011 0\n')
    assert main(['--quiet', 'build-memorizer', '--dataset', str(clash), '--out', str(tmp_path / 'x.btn')]) == 2
    ragged = tmp_path / 'ragged.ds'
    ragged.write_text('011 1\n01 0\n')
    assert main(['--quiet', 'build-memorizer', '--dataset', str(ragged), '--out', str(tmp_path / 'x.btn')]) == 4


def test_encode_decode_round_trip(xor_file, tmp_path, capsys):
    bits = tmp_path / 'xor.btnbits'
    back = tmp_path / 'back.btn'
    assert main(['--quiet', 'encode', '--net', xor_file, '--out', str(bits)]) == 0
    assert capsys.readouterr().out.startswith('w=6 ')
    assert main(['--quiet', 'decode', '--bits', str(bits), '--out', str(back)]) == 0
    assert same_parameters(read_btn(back), canonicalize(read_btn(xor_file)))


def test_malformed_bit_file(tmp_path):
    bits = tmp_path / 'junk.btnbits'
    bits.write_bytes(b'\xff')
    assert main(['--quiet', 'decode', '--bits', str(bits), '--out', str(tmp_path / 'x.btn')]) == 5
    bits.write_bytes(b'\x00')
    assert main(['--quiet', 'decode', '--bits', str(bits), '--out', str(tmp_path / 'x.btn')]) == 5


def test_curves_file(tmp_path):
    out = tmp_path / 'curves.csv'
    assert main(['--quiet', 'curves', '--out', str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == 'eps_star,bayes,independent_curve,arbitrary_bound,trivial'
    assert len(lines) == 102
    first = [float(v) for v in lines[1].split(',')]
    last = [float(v) for v in lines[-1].split(',')]
    assert first[:4] == [0.0, 0.0, 0.0, 0.0]
    assert last == pytest.approx([0.5] * 5)
    values = np.array([[float(v) for v in line.split(',')] for line in lines[1:]])
    assert np.all(values[:, 1] <= values[:, 2] + 1e-12)
    assert np.all(values[:, 2] <= values[:, 3] + 1e-12)

    assert main(['--quiet', 'curves', '--out', str(out), '--q', '4', '--points', '11']) == 0
    lines = out.read_text().splitlines()
    assert lines[0].endswith(',high_quantization') and len(lines) == 12


def test_simulate_writes_csv(tmp_path):
    config = tmp_path / 'run.cfg'
    config.write_text('learner = constant\neps_grid = 0.1\nn_grid = 4\ntrials = 3\n')
    out = tmp_path / 'rows.csv'
    assert main(['--quiet', 'simulate', '--config', str(config), '--out', str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 2 and lines[0].startswith('eps_star,n,trials,mean_risk')
    config.write_text('learner = nonsense\n')
    assert main(['--quiet', 'simulate', '--config', str(config), '--out', str(out)]) == 4
