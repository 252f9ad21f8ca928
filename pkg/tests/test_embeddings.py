"""Embedding IO and the word-space projection (descent vs closed form)."""

import numpy as np
import pytest

from neradapt.checkpoints import CheckpointError
from neradapt.corpus import LexiconEntry, PivotLexicon
from neradapt.embeddings import (EmbeddingError, EmbeddingMatrix,
                                 ProjectionMatrix, ProjectionTrainConfig,
                                 learn_projection, load_embeddings,
                                 project_table, project_word, projection_loss,
                                 solve_projection_closed_form, _design_matrices)


def identity_lexicon(words, c=1.0):
    return PivotLexicon([LexiconEntry(w, w, c, "P1") for w in words])


def random_embeddings(rng, n, dim, prefix="w"):
    vocab = [f"{prefix}{i}" for i in range(n)]
    return EmbeddingMatrix(vocab, rng.normal(size=(n, dim)))


# -- loader ------------------------------------------------------------

def test_load_embeddings_two_words(tmp_path):
    f = tmp_path / "emb.txt"
    f.write_text("a 1.0 2.0\nb 3.0 4.0\n")
    emb = load_embeddings(f)
    assert emb.vocab == ["a", "b"] and emb.dim == 2
    assert np.array_equal(emb.vectors, [[1.0, 2.0], [3.0, 4.0]])


def test_load_embeddings_single_line_dim_one(tmp_path):
    f = tmp_path / "emb.txt"
    f.write_text("x 0.5\n")
    assert load_embeddings(f).dim == 1


def test_load_embeddings_dim_mismatch(tmp_path):
    f = tmp_path / "emb.txt"
    f.write_text("a 1.0\nb 2.0 3.0\n")
    with pytest.raises(EmbeddingError, match="line 2: dim mismatch"):
        load_embeddings(f)


def test_load_embeddings_zero_dim(tmp_path):
    f = tmp_path / "emb.txt"
    f.write_text("lonely\n")
    with pytest.raises(EmbeddingError, match="no vector components"):
        load_embeddings(f)


def test_load_embeddings_duplicate_keeps_first(tmp_path):
    f = tmp_path / "emb.txt"
    f.write_text("a 1.0\na 9.0\nb 2.0\n")
    emb = load_embeddings(f)
    assert emb.vocab == ["a", "b"]
    assert emb.lookup("a")[0] == 1.0


def test_lookup_lowercases_and_oov_is_zero(tmp_path):
    emb = EmbeddingMatrix(["word"], [[1.0, 2.0]])
    assert np.array_equal(emb.lookup("WORD"), [1.0, 2.0])
    assert np.array_equal(emb.lookup("missing"), [0.0, 0.0])


def test_save_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    emb = random_embeddings(rng, 5, 3)
    path = tmp_path / "emb.txt"
    emb.save(path)
    loaded = load_embeddings(path)
    assert loaded.vocab == emb.vocab
    assert np.array_equal(loaded.vectors, emb.vectors)  # repr() is lossless


# -- closed form -------------------------------------------------------

def test_closed_form_identity_setup():
    rng = np.random.default_rng(1)
    emb = random_embeddings(rng, 12, 4)
    proj = solve_projection_closed_form(emb, emb, identity_lexicon(emb.vocab))
    assert np.allclose(proj.z, np.eye(4), atol=1e-8)


def test_closed_form_single_entry_scalar():
    # one pair, d=1: x=2, y=6 -> z=3 regardless of the confidence weight
    emb_s = EmbeddingMatrix(["w"], [[6.0]])
    emb_t = EmbeddingMatrix(["w"], [[2.0]])
    for c in (0.1, 0.5, 1.0):
        proj = solve_projection_closed_form(emb_s, emb_t, identity_lexicon(["w"], c))
        assert abs(proj.z[0, 0] - 3.0) < 1e-12


def test_closed_form_gradient_vanishes():
    rng = np.random.default_rng(2)
    emb_s = random_embeddings(rng, 30, 6, "s")
    emb_t = EmbeddingMatrix(emb_s.vocab, rng.normal(size=(30, 6)))
    lex = PivotLexicon([LexiconEntry(w, w, float(rng.uniform(0.1, 1.0)), "P1")
                        for w in emb_s.vocab])
    proj = solve_projection_closed_form(emb_s, emb_t, lex)
    x, y, c, _ = _design_matrices(emb_s, emb_t, lex)
    grad = 2.0 * x.T @ (c[:, None] * (x @ proj.z - y))
    assert np.max(np.abs(grad)) < 1e-6


def test_closed_form_confidence_scaling_invariance():
    rng = np.random.default_rng(3)
    emb_s = random_embeddings(rng, 20, 5, "s")
    emb_t = EmbeddingMatrix(emb_s.vocab, rng.normal(size=(20, 5)))
    cs = rng.uniform(0.05, 1.0, size=20)
    lex1 = PivotLexicon([LexiconEntry(w, w, float(c), "P1")
                         for w, c in zip(emb_s.vocab, cs)])
    lex2 = PivotLexicon([LexiconEntry(w, w, float(c * 0.125), "P1")
                         for w, c in zip(emb_s.vocab, cs)])
    z1 = solve_projection_closed_form(emb_s, emb_t, lex1).z
    z2 = solve_projection_closed_form(emb_s, emb_t, lex2).z
    assert np.allclose(z1, z2, atol=1e-10)


def test_closed_form_ridge_on_singular_system(caplog):
    # two identical pairs: rank-deficient Gram matrix in d=2
    emb_s = EmbeddingMatrix(["a", "b"], [[1.0, 0.0], [1.0, 0.0]])
    emb_t = EmbeddingMatrix(["a", "b"], [[1.0, 1.0], [1.0, 1.0]])
    proj = solve_projection_closed_form(emb_s, emb_t, identity_lexicon(["a", "b"]))
    assert np.all(np.isfinite(proj.z))


# -- gradient descent --------------------------------------------------

def test_learn_projection_identity_reaches_zero_loss():
    rng = np.random.default_rng(4)
    emb = random_embeddings(rng, 16, 4)
    fit = learn_projection(emb, emb, identity_lexicon(emb.vocab))
    assert fit.loss_history[-1] < 1e-10
    projected = project_table(emb, fit.projection)
    assert np.max(np.abs(projected - emb.vectors)) < 1e-5


def test_learn_projection_recovers_rotation():
    rng = np.random.default_rng(5)
    emb_t = random_embeddings(rng, 40, 8)
    rot, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    # v_t rows are v_s rows right-multiplied by rot.T, so the zero-loss map
    # from target to source space is (rot.T).T = rot
    emb_s = EmbeddingMatrix(emb_t.vocab, emb_t.vectors @ rot)
    fit = learn_projection(emb_s, emb_t, identity_lexicon(emb_t.vocab))
    assert np.linalg.norm(fit.projection.z - rot) / np.linalg.norm(rot) < 1e-3


def test_learn_projection_matches_closed_form_loss():
    rng = np.random.default_rng(6)
    emb_s = random_embeddings(rng, 50, 8, "s")
    emb_t = EmbeddingMatrix(emb_s.vocab, rng.normal(size=(50, 8)))
    lex = PivotLexicon([LexiconEntry(w, w, float(rng.uniform(0.05, 1.0)), "P1")
                        for w in emb_s.vocab])
    fit = learn_projection(emb_s, emb_t, lex)
    closed = solve_projection_closed_form(emb_s, emb_t, lex)
    x, y, c, _ = _design_matrices(emb_s, emb_t, lex)
    assert fit.loss_history[-1] <= (1.0 + 1e-6) * projection_loss(closed.z, x, y, c)


def test_learn_projection_loss_history_non_increasing():
    rng = np.random.default_rng(7)
    emb_s = random_embeddings(rng, 30, 6, "s")
    emb_t = EmbeddingMatrix(emb_s.vocab, rng.normal(size=(30, 6)))
    for cfg in (ProjectionTrainConfig(learning_rate=0.05),
                ProjectionTrainConfig(learning_rate=0.05, batch_size=30)):
        fit = learn_projection(emb_s, emb_t, identity_lexicon(emb_s.vocab), cfg)
        hist = fit.loss_history
        assert all(b <= a + 1e-15 for a, b in zip(hist, hist[1:]))


def test_learn_projection_minibatch_mode_converges():
    rng = np.random.default_rng(8)
    emb_s = random_embeddings(rng, 24, 4, "s")
    emb_t = EmbeddingMatrix(emb_s.vocab, rng.normal(size=(24, 4)))
    cfg = ProjectionTrainConfig(batch_size=8, max_epochs=2000, seed=3)
    fit = learn_projection(emb_s, emb_t, identity_lexicon(emb_s.vocab), cfg)
    closed = solve_projection_closed_form(emb_s, emb_t, identity_lexicon(emb_s.vocab))
    x, y, c, _ = _design_matrices(emb_s, emb_t, identity_lexicon(emb_s.vocab))
    assert fit.loss_history[-1] <= (1.0 + 1e-3) * projection_loss(closed.z, x, y, c)


def test_skipped_plus_used_covers_lexicon():
    rng = np.random.default_rng(9)
    emb_s = random_embeddings(rng, 10, 3, "s")
    emb_t = random_embeddings(rng, 10, 3, "s")
    lex = identity_lexicon(emb_s.vocab[:6])
    lex.entries.append(LexiconEntry("nowhere", "nowhere", 0.5, "P2"))
    fit = learn_projection(emb_s, emb_t, lex)
    assert fit.used_entries + fit.skipped_entries == len(lex)
    assert fit.skipped_entries == 1


def test_learn_projection_no_usable_entries_raises():
    rng = np.random.default_rng(10)
    emb_s = random_embeddings(rng, 4, 3, "s")
    emb_t = random_embeddings(rng, 4, 3, "t")
    with pytest.raises(EmbeddingError, match="no lexicon entry"):
        learn_projection(emb_s, emb_t, identity_lexicon(["zz"]))


def test_rectangular_projection_supported():
    rng = np.random.default_rng(11)
    emb_t = random_embeddings(rng, 30, 5)
    emb_s = EmbeddingMatrix(emb_t.vocab, rng.normal(size=(30, 7)))
    fit = learn_projection(emb_s, emb_t, identity_lexicon(emb_t.vocab))
    assert fit.projection.z.shape == (5, 7)


# -- projection application --------------------------------------------

def test_project_word_identity():
    emb = EmbeddingMatrix(["w"], [[1.0, 2.0]])
    proj = ProjectionMatrix(np.eye(2))
    assert np.array_equal(project_word("w", emb, proj), [1.0, 2.0])


def test_project_word_oov_is_zero():
    emb = EmbeddingMatrix(["w"], [[1.0, 2.0]])
    proj = ProjectionMatrix(np.array([[1.0, 0.0, 3.0], [0.0, 2.0, 1.0]]))
    out = project_word("unknown", emb, proj)
    assert out.shape == (3,) and np.array_equal(out, np.zeros(3))


def test_project_word_hand_example():
    emb = EmbeddingMatrix(["w"], [[1.0, 2.0]])
    proj = ProjectionMatrix(np.array([[1.0, 0.0], [0.0, 2.0]]))
    assert np.array_equal(project_word("w", emb, proj), [1.0, 4.0])


def test_projection_is_linear():
    rng = np.random.default_rng(12)
    z = ProjectionMatrix(rng.normal(size=(4, 3)))
    u, w = rng.normal(size=4), rng.normal(size=4)
    a, b = 2.5, -1.25
    assert np.allclose((a * u + b * w) @ z.z, a * (u @ z.z) + b * (w @ z.z))


def test_projection_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    proj = ProjectionMatrix(rng.normal(size=(3, 5)))
    path = tmp_path / "z.sxz"
    proj.save(path)
    loaded = ProjectionMatrix.load(path, frozen=True)
    assert loaded.frozen
    assert loaded.z.tobytes() == proj.z.tobytes()
    assert path.read_bytes()[:4] == b"SXZ1"


def test_projection_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "z.sxz"
    path.write_bytes(b"JUNKxxxx")
    with pytest.raises(CheckpointError, match="bad magic"):
        ProjectionMatrix.load(path)
