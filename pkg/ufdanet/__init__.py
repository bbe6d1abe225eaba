import logging

from flask import Flask
from flask_cors import CORS

from ufdanet.config import Config
from ufdanet.swagger import configure_swagger
from ufdanet.utils.errors import UfdanetError

logger = logging.getLogger(__name__)

EXTENSION_KEY = 'ufdanet'


def create_app(checkpoint: str | None = None, threshold: float | None = None, state=None):
    """
    Factory pattern para criar a aplicação Flask de pontuação

    Args:
        checkpoint: Caminho do checkpoint (padrão: UFDANET_CHECKPOINT)
        threshold: Limiar de decisão (padrão: UFDANET_THRESHOLD)
        state: ModelState já carregado (dispensa ``checkpoint``)
    """

    app = Flask(__name__)
    app.config.from_object(Config)

    # ==================== CORS ====================
    CORS(app,
         origins=app.config['CORS_ORIGINS'],
         methods=["GET", "POST", "OPTIONS"],
         allow_headers=["Content-Type", "Accept", "Origin", "X-Requested-With"],
         max_age=3600)

    # ==================== MODELO ====================
    checkpoint = checkpoint or app.config['CHECKPOINT']
    if state is None and checkpoint:
        from ufdanet.services.checkpoint import load_checkpoint
        try:
            state = load_checkpoint(checkpoint)
            logger.info("✅ Modelo carregado de %s", checkpoint)
        except UfdanetError as e:
            logger.error("❌ Erro ao carregar modelo: %s", e.message)
    if state is None:
        logger.warning("⚠️ Nenhum checkpoint carregado; /api/pad/score responderá 503")

    app.extensions[EXTENSION_KEY] = {
        'state': state,
        'checkpoint': checkpoint,
        'threshold': app.config['THRESHOLD'] if threshold is None else float(threshold),
    }

    # Configurar Swagger
    api = configure_swagger(app)

    from ufdanet.routes.pad import pad_ns
    api.add_namespace(pad_ns, path='/pad')

    # ==================== HANDLERS DE ERRO ====================

    @api.errorhandler(UfdanetError)
    def ufdanet_error(error):
        return error.to_response(), 400

    @app.errorhandler(404)
    def not_found(error):
        response = {
            'success': False,
            'message': 'Rota não encontrada',
            'error': 'not_found'
        }
        return response, 404

    @app.errorhandler(405)
    def method_not_allowed(error):
        response = {
            'success': False,
            'message': 'Método não permitido para esta rota',
            'error': 'method_not_allowed'
        }
        return response, 405

    @app.errorhandler(413)
    def payload_too_large(error):
        response = {
            'success': False,
            'message': 'Arquivo maior que o limite permitido',
            'error': 'payload_too_large'
        }
        return response, 413

    @app.errorhandler(500)
    def internal_server_error(error):
        response = {
            'success': False,
            'message': 'Erro interno do servidor',
            'error': 'internal_server_error'
        }
        return response, 500

    # ==================== ROTA DE HEALTH CHECK ====================

    @app.route('/health')
    def health():
        """Health check"""
        return {
            'success': True,
            'status': 'healthy',
            'model_loaded': app.extensions[EXTENSION_KEY]['state'] is not None
        }, 200

    return app
