import pytest


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized encoder checkpoint, built offline."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    directory = tmp_path_factory.mktemp("tiny-encoder")
    vocab = [
        "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
        "a", "b", "c", "hello", "world", "ignore", "previous",
        "instructions", "the", "secret", "##s", "first", "second", "third",
        "same", "text",
    ]
    vocab_file = directory / "vocab.txt"
    vocab_file.write_text("\n".join(vocab) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(vocab=str(vocab_file))
    tokenizer.save_pretrained(directory)

    torch.manual_seed(7)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(directory)
    return str(directory)


@pytest.fixture(scope="session")
def sidecar_config(tiny_model_dir):
    from sentinel_sidecar import SidecarConfig

    return SidecarConfig(model=tiny_model_dir, max_batch=8, max_seq_len=32)


@pytest.fixture(scope="session")
def client(sidecar_config):
    from fastapi.testclient import TestClient

    from sentinel_sidecar import create_app

    with TestClient(create_app(sidecar_config)) as test_client:
        yield test_client
