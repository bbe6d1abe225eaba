class UfdanetError(ValueError):
    """Erro base do projeto.

    Carrega um ``code`` legível por máquina, no mesmo formato usado nas
    respostas da API (``{'success': False, 'message': ..., 'error': code}``).
    """

    code = 'ufdanet_error'

    def __init__(self, message: str, code: str | None = None):
        super().__init__(message)
        self.message = message
        if code:
            self.code = code

    def to_response(self) -> dict:
        return {
            'success': False,
            'message': self.message,
            'error': self.code
        }


class InputError(UfdanetError):
    """Entrada inválida (caixa fora da imagem, razão fora do intervalo, ...)"""
    code = 'invalid_input'


class DegenerateError(UfdanetError):
    """Entrada válida em forma, mas degenerada (fundo vazio, vetor constante)"""
    code = 'degenerate_input'


class DimensionError(UfdanetError):
    """Dimensão ou papel de tensor incompatível"""
    code = 'dimension_mismatch'


class SequencingError(UfdanetError):
    """Operação chamada fora da ordem do treinamento"""
    code = 'sequencing_error'


class CheckpointError(UfdanetError):
    """Checkpoint corrompido, de outra versão ou com dimensões diferentes"""
    code = 'checkpoint_error'


class TrainingAbort(UfdanetError):
    """Treino interrompido por valor não finito"""

    code = 'training_aborted'

    def __init__(self, message: str, stage: int | str, batch: int):
        super().__init__(f"Estágio {stage}, lote {batch}: {message}")
        self.stage = stage
        self.batch = batch
