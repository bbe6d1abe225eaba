import logging
import os
from datetime import datetime

import numpy as np
from PIL import Image
from werkzeug.datastructures import FileStorage
from werkzeug.utils import secure_filename

from ufdanet.utils.errors import InputError

logger = logging.getLogger(__name__)


class FileHandler:
    """Leitura/escrita de imagens e armazenamento de uploads"""

    UPLOAD_DIR = "uploads"
    ALLOWED_EXTENSIONS = {'png', 'jpg', 'jpeg', 'bmp'}

    @staticmethod
    def init_upload_dir(upload_dir: str | None = None) -> str:
        """Cria diretório de uploads se não existir"""
        upload_dir = upload_dir or FileHandler.UPLOAD_DIR
        os.makedirs(upload_dir, exist_ok=True)
        return upload_dir

    @staticmethod
    def allowed_file(filename: str) -> bool:
        """Verifica se o arquivo tem extensão permitida"""
        return '.' in filename and \
               filename.rsplit('.', 1)[1].lower() in FileHandler.ALLOWED_EXTENSIONS

    @staticmethod
    def save_uploaded_file(file: FileStorage, upload_dir: str | None = None) -> tuple[str, str]:
        """
        Salva imagem enviada para pontuação

        Args:
            file: Arquivo do Flask (FileStorage)
            upload_dir: Diretório de destino (padrão: UPLOAD_DIR)

        Returns:
            tuple: (caminho_absoluto, nome_do_arquivo)

        Raises:
            InputError: Se o arquivo não for permitido
        """
        upload_dir = FileHandler.init_upload_dir(upload_dir)

        if not FileHandler.allowed_file(file.filename or ''):
            raise InputError(
                f"Tipo de arquivo não permitido. Use: {', '.join(sorted(FileHandler.ALLOWED_EXTENSIONS))}"
            )

        original_filename = secure_filename(file.filename)
        timestamp = datetime.now().strftime('%Y%m%d_%H%M%S_%f')
        unique_filename = f"{timestamp}_{original_filename}"

        file_path = os.path.join(upload_dir, unique_filename)
        file.save(file_path)

        return os.path.abspath(file_path), unique_filename

    @staticmethod
    def delete_file(filepath: str) -> bool:
        """
        Deleta arquivo do sistema

        Args:
            filepath: Caminho do arquivo

        Returns:
            bool: True se deletado com sucesso
        """
        try:
            if os.path.exists(filepath):
                os.remove(filepath)
                return True
            return False
        except OSError as e:
            logger.warning("⚠️ Erro ao deletar arquivo %s: %s", filepath, e)
            return False

    @staticmethod
    def load_image(filepath: str) -> np.ndarray:
        """
        Lê uma imagem RGB de 8 bits

        Returns:
            np.ndarray: Array float32 (H, W, 3) com valores em [0, 1]

        Raises:
            InputError: Arquivo ausente ou ilegível
        """
        try:
            with Image.open(filepath) as img:
                array = np.asarray(img.convert('RGB'), dtype=np.uint8)
        except FileNotFoundError as e:
            raise InputError(f"Imagem não encontrada: {filepath}") from e
        except OSError as e:
            raise InputError(f"Erro ao ler a imagem {filepath}: {e}") from e
        return array.astype(np.float32) / 255.0

    @staticmethod
    def save_image(image: np.ndarray, filepath: str) -> str:
        """Grava array (H, W, 3) em [0, 1] como PNG RGB de 8 bits (sem perdas)"""
        os.makedirs(os.path.dirname(os.path.abspath(filepath)), exist_ok=True)
        quantized = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(quantized, mode='RGB').save(filepath, format='PNG')
        return filepath
