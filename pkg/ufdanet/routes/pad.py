import logging

from flask import current_app, request
from flask_restx import Namespace, Resource, fields

from ufdanet.services.evalkit import score
from ufdanet.services.file_handler import FileHandler
from ufdanet.utils.errors import InputError, UfdanetError

logger = logging.getLogger(__name__)

# Criar namespace de pontuação
pad_ns = Namespace('pad', description='Pontuação de liveness (anti-spoofing facial)')

# ==================== MODELS ====================

score_data_model = pad_ns.model('ScoreData', {
    'score': fields.Float(description='Probabilidade de liveness em [0, 1]'),
    'decision': fields.String(description="'live' ou 'spoof'"),
    'threshold': fields.Float(description='Limiar usado na decisão')
})

score_response_model = pad_ns.model('ScoreResponse', {
    'success': fields.Boolean(description='Status da operação'),
    'data': fields.Nested(score_data_model)
})

model_info_model = pad_ns.model('ModelInfo', {
    'success': fields.Boolean(description='Status da operação'),
    'data': fields.Raw(description='Dimensões, época e limiar do modelo servido')
})

error_model = pad_ns.model('Error', {
    'success': fields.Boolean(description='Status da operação'),
    'message': fields.String(description='Mensagem de erro'),
    'error': fields.String(description='Código do erro')
})

FACE_BOX_FIELDS = ('x', 'y', 'w', 'h')


def _served_model() -> dict:
    return current_app.extensions['ufdanet']


def _no_model_response():
    return {
        'success': False,
        'message': 'Nenhum modelo carregado (defina UFDANET_CHECKPOINT)',
        'error': 'model_not_loaded'
    }, 503


def _face_box_from_form() -> tuple[int, int, int, int]:
    missing = [name for name in FACE_BOX_FIELDS if name not in request.form]
    if missing:
        raise InputError(f"Campos da caixa do rosto ausentes: {', '.join(missing)}")
    try:
        return tuple(int(request.form[name]) for name in FACE_BOX_FIELDS)
    except ValueError as e:
        raise InputError("x, y, w e h devem ser inteiros") from e


# ==================== ENDPOINTS ====================

@pad_ns.route('/model')
class ModelInfo(Resource):

    @pad_ns.doc('model_info', description='Dimensões e limiar do modelo servido',
                responses={200: ('OK', model_info_model), 503: ('Sem modelo', error_model)})
    def get(self):
        """Informações do modelo carregado"""
        served = _served_model()
        state = served['state']
        if state is None:
            return _no_model_response()
        return {
            'success': True,
            'data': {
                'dims': state.dims,
                'epoch': state.epoch,
                'threshold': served['threshold'],
                'checkpoint': served['checkpoint'],
            }
        }, 200


@pad_ns.route('/score')
class ScoreImage(Resource):

    @pad_ns.doc('score_image',
                description='Pontua uma imagem (multipart: file + x, y, w, h)',
                responses={
                    200: ('Pontuação calculada', score_response_model),
                    400: ('Entrada inválida', error_model),
                    503: ('Sem modelo', error_model),
                    500: ('Erro interno', error_model)
                })
    def post(self):
        """
        Pontuar imagem de rosto

        **Processo:**
        1. Upload da imagem (PNG, JPG, JPEG, BMP) e da caixa do rosto
        2. Recorte do rosto e inferência s = C_l(E_l(E(x)))
        3. Decisão: live se s >= threshold
        """
        served = _served_model()
        if served['state'] is None:
            return _no_model_response()

        if 'file' not in request.files:
            return {
                'success': False,
                'message': 'Nenhum arquivo enviado',
                'error': 'no_file'
            }, 400

        file = request.files['file']
        if file.filename == '':
            return {
                'success': False,
                'message': 'Nenhum arquivo selecionado',
                'error': 'empty_filename'
            }, 400

        file_path = None
        try:
            face_box = _face_box_from_form()
            file_path, unique_filename = FileHandler.save_uploaded_file(
                file, current_app.config['UPLOAD_DIR']
            )
            value = score(served['state'], FileHandler.load_image(file_path), face_box)
            threshold = served['threshold']
            decision = 'live' if value >= threshold else 'spoof'
            logger.info("🔍 %s: score %.4f -> %s", unique_filename, value, decision)
            return {
                'success': True,
                'data': {'score': value, 'decision': decision, 'threshold': threshold}
            }, 200

        except UfdanetError as e:
            return e.to_response(), 400

        except Exception as e:
            logger.exception("❌ Erro ao pontuar imagem")
            return {
                'success': False,
                'message': f'Erro ao processar arquivo: {str(e)}',
                'error': 'processing_error'
            }, 500

        finally:
            if file_path:
                FileHandler.delete_file(file_path)
